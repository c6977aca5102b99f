"""Regressor classes mapping (xB, Q2, t) to the four local fit targets.

Three model classes are supported:

* cdnn  -- classical MLP: input map 3->64, eight 64->64 hidden layers, all with
  rectifier activations, linear 64->4 output.
* bqdnn -- baseline quantum regressor: linear 3->6 preprocessing, angle
  embedding on 6 qubits, 8 entangling layers, Pauli-Z readout, then a 6->64
  tanh head and linear 64->4 output.  Circuit angles use small-angle init.
* fqdnn -- same architecture with the quantum-specific refinements: tunable
  entanglement range (default nearest-neighbor), layer-wise depth growth
  during training, and depth-scaled larger-angle initialization.

Complexity accounting reproduces the published conventions exactly: dense
layers cost P = MN + N parameters and C = 2MN flops, activations cost their
width, and each quantum layer (and the quantum readout feeding the head) is
priced at the Hilbert-space width 2^n.
"""

import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ShapeError
from . import qsim
from .physics import CFFSet

MODEL_CLASSES = ("cdnn", "bqdnn", "fqdnn")


# ----------------------------------------------------------------------------
# Specs
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    in_dim: int = 3
    hidden_width: int = 64
    n_hidden: int = 8
    out_dim: int = 4

    @property
    def layer_dims(self):
        """(in, out) pairs for the 1 + n_hidden + 1 affine layers."""
        w = self.hidden_width
        dims = [(self.in_dim, w)]
        dims += [(w, w)] * self.n_hidden
        dims += [(w, self.out_dim)]
        return dims


@dataclass(frozen=True)
class QdnnSpec:
    in_dim: int = 3
    n_qubits: int = 6
    n_layers: int = 8
    entangle_range: int = 1
    init_scheme: str = "small_angle"      # or "depth_scaled"
    init_sigma: float = 0.1
    growth_schedule: str = "fixed"        # or "layerwise"
    head_hidden: int = 64
    out_dim: int = 4

    def __post_init__(self):
        if self.init_scheme not in ("small_angle", "depth_scaled"):
            raise ValueError(f"unknown init scheme {self.init_scheme!r}")
        if self.growth_schedule not in ("fixed", "layerwise"):
            raise ValueError(f"unknown growth schedule {self.growth_schedule!r}")


def spec_for(model_class: str) -> "MlpSpec | QdnnSpec":
    """Default architecture for one of the named model classes."""
    if model_class == "cdnn":
        return MlpSpec()
    if model_class == "bqdnn":
        return QdnnSpec(init_scheme="small_angle", init_sigma=0.1, growth_schedule="fixed")
    if model_class == "fqdnn":
        return QdnnSpec(init_scheme="depth_scaled", init_sigma=0.3,
                        growth_schedule="layerwise", entangle_range=1)
    raise ValueError(f"unknown model class {model_class!r}; expected one of {MODEL_CLASSES}")


# ----------------------------------------------------------------------------
# Complexity accounting
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelComplexity:
    n_params: int
    n_flops: int


def count_params(spec) -> int:
    if isinstance(spec, MlpSpec):
        return sum(m * n + n for m, n in spec.layer_dims)
    if isinstance(spec, QdnnSpec):
        pre = spec.in_dim * spec.n_qubits + spec.n_qubits
        angles = spec.n_layers * spec.n_qubits * 3
        head = (spec.n_qubits * spec.head_hidden + spec.head_hidden
                + spec.head_hidden * spec.out_dim + spec.out_dim)
        return pre + angles + head
    raise TypeError(f"unsupported spec type {type(spec)!r}")


def count_flops(spec) -> int:
    if isinstance(spec, MlpSpec):
        w = spec.hidden_width
        total = 2 * spec.in_dim * w + w                      # input map + rectifier
        total += spec.n_hidden * (2 * w * w + w)             # hidden layers + rectifiers
        total += 2 * w * spec.out_dim                        # linear output
        return total
    if isinstance(spec, QdnnSpec):
        dim = 2 ** spec.n_qubits
        total = 2 * spec.in_dim * dim                        # preprocessing, priced at 2^n
        total += spec.n_layers * 2 * dim * dim               # quantum layers on the state
        total += 2 * dim * spec.head_hidden                  # readout into the head
        total += spec.head_hidden                            # tanh
        total += 2 * spec.head_hidden * spec.out_dim         # output map
        return total
    raise TypeError(f"unsupported spec type {type(spec)!r}")


def complexity(spec) -> ModelComplexity:
    return ModelComplexity(n_params=count_params(spec), n_flops=count_flops(spec))


# ----------------------------------------------------------------------------
# Initialization
# ----------------------------------------------------------------------------

def init_circuit_angles(n_layers: int, n_qubits: int, scheme: str, sigma0: float,
                        seed) -> np.ndarray:
    """Draw (L, n, 3) rotation angles.

    small_angle: every layer ~ Normal(0, sigma0).
    depth_scaled: layer l ~ Normal(0, sigma0 / sqrt(l + 1)), shrinking with depth.
    """
    rng = np.random.default_rng(seed)
    if scheme == "small_angle":
        return rng.normal(0.0, sigma0, size=(n_layers, n_qubits, 3))
    if scheme == "depth_scaled":
        out = np.empty((n_layers, n_qubits, 3))
        for layer in range(n_layers):
            out[layer] = rng.normal(0.0, sigma0 / np.sqrt(layer + 1.0),
                                    size=(n_qubits, 3))
        return out
    raise ValueError(f"unknown init scheme {scheme!r}")


def _glorot(rng, n_out, n_in):
    return rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), size=(n_out, n_in))


# ----------------------------------------------------------------------------
# CDNN
# ----------------------------------------------------------------------------

class CdnnModel:
    """MLP regressor with hand-rolled reverse-mode gradients."""

    model_class = "cdnn"

    def __init__(self, spec: MlpSpec, seed):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        dims = spec.layer_dims
        for i, (m, n) in enumerate(dims):
            if i < len(dims) - 1:
                w = rng.normal(0.0, np.sqrt(2.0 / m), size=(n, m))  # He init for rectifiers
            else:
                w = _glorot(rng, n, m)
            self.weights.append(w)
            self.biases.append(np.zeros(n))

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self._forward_cached(x)
        return out

    def _forward_cached(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.spec.in_dim,):
            raise ShapeError(f"expected input shape ({self.spec.in_dim},), got {x.shape}")
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = w @ h + b
            if i < last:
                h = np.maximum(h, 0.0)
            cache.append(h)
        return h, cache

    def forward_cached(self, x):
        """Output plus the activation cache needed by backprop."""
        return self._forward_cached(x)

    def backprop(self, cache, d_out):
        """Gradients of (d_out . output) w.r.t. every weight and bias."""
        grads = {}
        delta = np.asarray(d_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[f"w{i}"] = np.outer(delta, cache[i])
            grads[f"b{i}"] = delta
            if i > 0:
                delta = self.weights[i].T @ delta
                delta = delta * (cache[i] > 0)  # rectifier mask on this layer's output
        return grads

    def value_and_grad_dict(self, x, d_out):
        out, cache = self._forward_cached(x)
        return out, self.backprop(cache, d_out)

    # named-array view used by the optimizer ---------------------------------
    def param_arrays(self) -> dict:
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        return arrays

    def lr_scale(self, name: str) -> float:
        return 1.0

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays().values()])

    def set_flat(self, vec: np.ndarray):
        pos = 0
        for arr in self.param_arrays().values():
            cnt = arr.size
            arr[...] = vec[pos:pos + cnt].reshape(arr.shape)
            pos += cnt
        if pos != vec.size:
            raise ShapeError("flat vector length mismatch")


# ----------------------------------------------------------------------------
# QDNN
# ----------------------------------------------------------------------------

class QdnnModel:
    """Hybrid regressor: affine preprocessing, entangling circuit, tanh head.

    Circuit-angle gradients use the exact parameter-shift rule (chained with
    the analytic head Jacobian); the classical pieces use ordinary
    reverse-mode.  angle_lr_scale lets the optimizer run a different learning
    rate on the rotation angles than on the classical weights.
    """

    def __init__(self, spec: QdnnSpec, seed, model_class: str = "bqdnn",
                 angle_lr_scale: float = 1.0):
        self.spec = spec
        self.model_class = model_class
        self.angle_lr_scale = angle_lr_scale
        rng = np.random.default_rng(seed)
        self.pre_w = _glorot(rng, spec.n_qubits, spec.in_dim)
        self.pre_b = np.zeros(spec.n_qubits)
        # angle stream drawn from a child seed so depth growth can re-derive it
        self.angle_seed = int(rng.integers(0, 2 ** 63 - 1))
        thetas = init_circuit_angles(spec.n_layers, spec.n_qubits,
                                     spec.init_scheme, spec.init_sigma, self.angle_seed)
        self.circuit = qsim.CircuitParams(thetas, spec.entangle_range)
        self.head_w1 = _glorot(rng, spec.head_hidden, spec.n_qubits)
        self.head_b1 = np.zeros(spec.head_hidden)
        self.head_w2 = _glorot(rng, spec.out_dim, spec.head_hidden)
        self.head_b2 = np.zeros(spec.out_dim)

    def embed_angles(self, x: np.ndarray) -> np.ndarray:
        return self.pre_w @ np.asarray(x, dtype=float) + self.pre_b

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.spec.in_dim,):
            raise ShapeError(f"expected input shape ({self.spec.in_dim},), got {x.shape}")
        z = qsim.run_circuit(self.embed_angles(x), self.circuit)
        return self._head(z)[0]

    def _head(self, z):
        h = np.tanh(self.head_w1 @ z + self.head_b1)
        return self.head_w2 @ h + self.head_b2, h

    def forward_cached(self, x):
        """Output plus a cache holding the parameter-shift Jacobians.

        The expensive part (the batched shifted-circuit evolution) happens
        here, so one call per epoch covers both the loss value and its
        gradient.
        """
        x = np.asarray(x, dtype=float)
        a = self.embed_angles(x)
        z, jac_theta, jac_feat = qsim.circuit_gradients(a, self.circuit)
        out, h = self._head(z)
        return out, (x, z, jac_theta, jac_feat, h)

    def backprop(self, cache, d_out):
        x, z, jac_theta, jac_feat, h = cache
        d_out = np.asarray(d_out, dtype=float)
        g_head_w2 = np.outer(d_out, h)
        g_head_b2 = d_out
        dh = (self.head_w2.T @ d_out) * (1.0 - h * h)
        g_head_w1 = np.outer(dh, z)
        g_head_b1 = dh
        dz = self.head_w1.T @ dh
        g_thetas = (jac_theta @ dz).reshape(self.circuit.thetas.shape)
        da = jac_feat @ dz
        return dict(pre_w=np.outer(da, x), pre_b=da, thetas=g_thetas,
                    head_w1=g_head_w1, head_b1=g_head_b1,
                    head_w2=g_head_w2, head_b2=g_head_b2)

    def value_and_grad_dict(self, x, d_out):
        out, cache = self.forward_cached(x)
        return out, self.backprop(cache, d_out)

    # named-array view --------------------------------------------------------
    _ARRAY_KEYS = ("pre_w", "pre_b", "thetas", "head_w1", "head_b1", "head_w2", "head_b2")

    def param_arrays(self) -> dict:
        return dict(pre_w=self.pre_w, pre_b=self.pre_b, thetas=self.circuit.thetas,
                    head_w1=self.head_w1, head_b1=self.head_b1,
                    head_w2=self.head_w2, head_b2=self.head_b2)

    def lr_scale(self, name: str) -> float:
        return self.angle_lr_scale if name == "thetas" else 1.0

    def set_circuit_depth(self, thetas: np.ndarray):
        """Swap in a new (L, n, 3) angle tensor, e.g. after depth growth."""
        self.circuit = qsim.CircuitParams(np.asarray(thetas, dtype=float),
                                          self.spec.entangle_range)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays().values()])

    def set_flat(self, vec: np.ndarray):
        pos = 0
        for arr in self.param_arrays().values():
            cnt = arr.size
            arr[...] = vec[pos:pos + cnt].reshape(arr.shape)
            pos += cnt
        if pos != vec.size:
            raise ShapeError("flat vector length mismatch")


def build_model(model_class: str, seed, spec=None, angle_lr_scale: float = 1.0):
    """Construct a fresh model of the named class with a deterministic seed."""
    spec = spec if spec is not None else spec_for(model_class)
    if model_class == "cdnn":
        return CdnnModel(spec, seed)
    if model_class in ("bqdnn", "fqdnn"):
        return QdnnModel(spec, seed, model_class=model_class, angle_lr_scale=angle_lr_scale)
    raise ValueError(f"unknown model class {model_class!r}")


def forward_cffs(model, x) -> CFFSet:
    return CFFSet.from_array(model.forward(x))


# ----------------------------------------------------------------------------
# Checkpoints: flat text format with spec header, shapes, seed, raw values
# ----------------------------------------------------------------------------

CHECKPOINT_MAGIC = "qcffit-checkpoint 1"


def save_checkpoint(model, seed, path):
    """Serialize a model to a documented flat text format."""
    buf = io.StringIO()
    buf.write(CHECKPOINT_MAGIC + "\n")
    buf.write(f"model {model.model_class}\n")
    buf.write(f"seed {seed}\n")
    buf.write("spec " + json.dumps(asdict(model.spec), sort_keys=True) + "\n")
    if isinstance(model, QdnnModel):
        buf.write(f"angle_lr_scale {model.angle_lr_scale!r}\n")
    arrays = model.param_arrays()
    for name, arr in arrays.items():
        shape = " ".join(str(s) for s in arr.shape)
        buf.write(f"array {name} {shape}\n")
        buf.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Rebuild a model from save_checkpoint output; returns (model, seed)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ShapeError(f"{path}: not a qcffit checkpoint")
    model_class = lines[1].split(" ", 1)[1]
    seed = int(lines[2].split(" ", 1)[1])
    spec_json = json.loads(lines[3].split(" ", 1)[1])
    idx = 4
    angle_lr_scale = 1.0
    if lines[idx].startswith("angle_lr_scale "):
        angle_lr_scale = float(lines[idx].split(" ", 1)[1])
        idx += 1
    arrays = {}
    while idx < len(lines):
        header = lines[idx].split()
        if header[0] != "array":
            raise ShapeError(f"{path}: malformed array header at line {idx + 1}")
        name = header[1]
        shape = tuple(int(s) for s in header[2:])
        values = np.array([float(v) for v in lines[idx + 1].split()])
        arrays[name] = values.reshape(shape)
        idx += 2

    if model_class == "cdnn":
        model = CdnnModel(MlpSpec(**spec_json), seed=0)
        for i in range(len(model.weights)):
            model.weights[i][...] = arrays[f"w{i}"]
            model.biases[i][...] = arrays[f"b{i}"]
    else:
        spec = QdnnSpec(**spec_json)
        model = QdnnModel(spec, seed=0, model_class=model_class,
                          angle_lr_scale=angle_lr_scale)
        if arrays["thetas"].shape != model.circuit.thetas.shape:
            model.set_circuit_depth(arrays["thetas"])
        for key in model._ARRAY_KEYS:
            if key == "thetas":
                model.circuit.thetas[...] = arrays[key]
            else:
                getattr(model, key)[...] = arrays[key]
    return model, seed
