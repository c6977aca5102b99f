"""Bootstrap global fit: continuous CFF surfaces over (xB, t, Q2).

Each ensemble member is a small dense network (input map to width 36, eight
36-wide hidden layers with a documented cyclic mixture of activations, linear
output) trained on a bootstrap resample of the local extractions with targets
jittered inside their uncertainties.  The ensemble mean is the central surface
and the N-1-normalized spread of member predictions is the pointwise
uncertainty.  Inputs are (xB, t, Q2) plus the recomputed skewness
xi = xB/(2-xB); features and targets are standardized with whole-dataset
statistics so the four targets contribute comparably to the loss.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import ConfigError, DivergenceError, EmptyEnsembleError

ACTIVATION_CYCLE_DEFAULT = (
    "relu", "leaky_relu", "tanh", "relu6", "tanhshrink", "relu", "tanh", "leaky_relu",
)

_LEAKY_SLOPE = 0.01


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "leaky_relu":
        return np.where(x > 0, x, _LEAKY_SLOPE * x)
    if name == "tanh":
        return np.tanh(x)
    if name == "relu6":
        return np.clip(x, 0.0, 6.0)
    if name == "tanhshrink":
        return x - np.tanh(x)
    raise ConfigError(f"unknown activation {name!r}")


def _act_grad(name, x):
    if name == "relu":
        return (x > 0).astype(float)
    if name == "leaky_relu":
        return np.where(x > 0, 1.0, _LEAKY_SLOPE)
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if name == "relu6":
        return ((x > 0) & (x < 6)).astype(float)
    if name == "tanhshrink":
        t = np.tanh(x)
        return t * t
    raise ConfigError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class GlobalNetSpec:
    in_dim: int = 4                     # (xB, t, Q2, xi)
    width: int = 36
    n_hidden: int = 8
    out_dim: int = 4
    activations: tuple = ACTIVATION_CYCLE_DEFAULT
    batch_norm: bool = True
    dropout: float = 0.1

    def __post_init__(self):
        if self.n_hidden != len(self.activations):
            raise ConfigError(
                f"need one activation per hidden layer: {self.n_hidden} != "
                f"{len(self.activations)}"
            )
        if not (self.dropout == 0.0 or 0.1 <= self.dropout <= 0.5):
            raise ConfigError(f"dropout must be 0 or within [0.1, 0.5], got {self.dropout}")


class GlobalNet:
    """One ensemble member; holds its own weights and batch-norm state."""

    def __init__(self, spec: GlobalNetSpec, seed):
        self.spec = spec
        rng = np.random.default_rng(seed)
        dims = [spec.in_dim] + [spec.width] * spec.n_hidden + [spec.out_dim]
        self.weights = []
        self.biases = []
        for m, n in zip(dims[:-1], dims[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / (m + n)), size=(n, m)))
            self.biases.append(np.zeros(n))
        if spec.batch_norm:
            self.bn_gamma = [np.ones(spec.width) for _ in range(spec.n_hidden)]
            self.bn_beta = [np.zeros(spec.width) for _ in range(spec.n_hidden)]
            self.bn_mean = [np.zeros(spec.width) for _ in range(spec.n_hidden)]
            self.bn_var = [np.ones(spec.width) for _ in range(spec.n_hidden)]
        self._bn_eps = 1e-5
        self._bn_momentum = 0.1

    # forward -----------------------------------------------------------------
    def forward(self, x: np.ndarray, training: bool = False, rng=None):
        """x: (B, in_dim).  Training mode uses batch stats and dropout."""
        out, _ = self._forward_cached(x, training=training, rng=rng)
        return out

    def _forward_cached(self, x, training, rng=None):
        spec = self.spec
        h = np.asarray(x, dtype=float)
        cache = []
        for layer in range(spec.n_hidden):
            lin = h @ self.weights[layer].T + self.biases[layer]
            step = {"h_in": h, "lin": lin}
            if spec.batch_norm:
                if training:
                    mu = lin.mean(axis=0)
                    var = lin.var(axis=0)
                    self.bn_mean[layer] = ((1 - self._bn_momentum) * self.bn_mean[layer]
                                           + self._bn_momentum * mu)
                    self.bn_var[layer] = ((1 - self._bn_momentum) * self.bn_var[layer]
                                          + self._bn_momentum * var)
                else:
                    mu = self.bn_mean[layer]
                    var = self.bn_var[layer]
                inv_std = 1.0 / np.sqrt(var + self._bn_eps)
                xhat = (lin - mu) * inv_std
                pre = self.bn_gamma[layer] * xhat + self.bn_beta[layer]
                step.update(xhat=xhat, inv_std=inv_std, pre=pre)
            else:
                pre = lin
                step["pre"] = pre
            act = _act(spec.activations[layer], pre)
            step["act_in"] = pre
            if training and spec.dropout > 0:
                if rng is None:
                    raise ConfigError("training-mode forward needs an RNG for dropout")
                mask = (rng.random(act.shape) >= spec.dropout) / (1.0 - spec.dropout)
                act = act * mask
                step["drop_mask"] = mask
            cache.append(step)
            h = act
        out = h @ self.weights[-1].T + self.biases[-1]
        cache.append({"h_in": h})
        return out, cache

    # backward ----------------------------------------------------------------
    def backprop(self, cache, d_out):
        """Gradients of the summed loss term d_out (B, out_dim)."""
        spec = self.spec
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        grads_gamma = [None] * spec.n_hidden if spec.batch_norm else None
        grads_beta = [None] * spec.n_hidden if spec.batch_norm else None

        delta = np.asarray(d_out, dtype=float)
        grads_w[-1] = delta.T @ cache[-1]["h_in"]
        grads_b[-1] = delta.sum(axis=0)
        delta = delta @ self.weights[-1]

        for layer in range(spec.n_hidden - 1, -1, -1):
            step = cache[layer]
            if "drop_mask" in step:
                delta = delta * step["drop_mask"]
            delta = delta * _act_grad(spec.activations[layer], step["act_in"])
            if spec.batch_norm:
                xhat = step["xhat"]
                inv_std = step["inv_std"]
                b = delta.shape[0]
                grads_gamma[layer] = (delta * xhat).sum(axis=0)
                grads_beta[layer] = delta.sum(axis=0)
                dxhat = delta * self.bn_gamma[layer]
                delta = (inv_std / b) * (
                    b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
                )
            grads_w[layer] = delta.T @ step["h_in"]
            grads_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer]

        out = {}
        for i, (gw, gb) in enumerate(zip(grads_w, grads_b)):
            out[f"w{i}"] = gw
            out[f"b{i}"] = gb
        if spec.batch_norm:
            for i in range(spec.n_hidden):
                out[f"gamma{i}"] = grads_gamma[i]
                out[f"beta{i}"] = grads_beta[i]
        return out

    def param_arrays(self):
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        if self.spec.batch_norm:
            for i in range(self.spec.n_hidden):
                arrays[f"gamma{i}"] = self.bn_gamma[i]
                arrays[f"beta{i}"] = self.bn_beta[i]
        return arrays


# ----------------------------------------------------------------------------
# Dataset plumbing
# ----------------------------------------------------------------------------

@dataclass
class LocalExtraction:
    """One bin's local result feeding the global fit."""

    set_id: str
    xB: float
    t: float
    Q2: float
    cffs: np.ndarray            # (4,)
    sigma: np.ndarray           # (4,) uncertainties on the CFF means


def _features(xB, t, Q2):
    xB = np.asarray(xB, dtype=float)
    return np.stack([xB, np.asarray(t, float), np.asarray(Q2, float),
                     xB / (2.0 - xB)], axis=-1)


@dataclass
class _Scaler:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(values):
        std = values.std(axis=0, ddof=0)
        return _Scaler(values.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, values):
        return (values - self.mean) / self.std

    def inverse(self, values):
        return values * self.std + self.mean


@dataclass
class GlobalEnsemble:
    spec: GlobalNetSpec
    nets: list
    bootstrap_indices: list
    excluded: np.ndarray
    x_scaler: _Scaler
    y_scaler: _Scaler
    train_points: np.ndarray      # (B, 3): xB, t, Q2
    seed: int
    _hull: object = field(default=None, repr=False)

    @property
    def n_replicas(self):
        return len(self.nets)

    def hull(self):
        if self._hull is None:
            try:
                self._hull = Delaunay(self.train_points)
            except QhullError:
                self._hull = "degenerate"
        return self._hull


def train_global(extractions, spec: GlobalNetSpec, n_replicas: int, seed: int,
                 epochs: int = 400, lr: float = 3e-3) -> GlobalEnsemble:
    """Train the bootstrap ensemble on pooled local extractions.

    Per replica: resample the bins with replacement, jitter each CFF target
    inside its quoted sigma, train a fresh net.  Replica streams are keyed by
    (seed, replica index) only, so results are schedule independent; divergent
    replicas are flagged and excluded from predictions.
    """
    from .training import Adam

    if len(extractions) < 2:
        raise ConfigError("global fit needs at least two local extractions")
    if n_replicas < 2:
        raise ConfigError("ensemble needs n_replicas >= 2")
    feats = _features([e.xB for e in extractions], [e.t for e in extractions],
                      [e.Q2 for e in extractions])
    targets = np.array([e.cffs for e in extractions], dtype=float)
    sigmas = np.array([e.sigma for e in extractions], dtype=float)
    x_scaler = _Scaler.fit(feats)
    y_scaler = _Scaler.fit(targets)
    xs = x_scaler.transform(feats)

    nets = []
    boot = []
    excluded = np.zeros(n_replicas, dtype=bool)
    n = len(extractions)
    for r in range(n_replicas):
        ss = np.random.SeedSequence(entropy=(int(seed) & 0xFFFFFFFF, r))
        init_seed, data_seed, drop_seed = (int(v) for v in ss.generate_state(3))
        rng = np.random.default_rng(data_seed)
        idx = rng.integers(0, n, size=n)
        jitter = targets[idx] + sigmas[idx] * rng.standard_normal((n, 4))
        ys = y_scaler.transform(jitter)
        net = GlobalNet(spec, init_seed)
        drop_rng = np.random.default_rng(drop_seed)
        opt = Adam(net.param_arrays(), lr=lr)
        x_train = xs[idx]
        try:
            for _ in range(epochs):
                out, cache = net._forward_cached(x_train, training=True, rng=drop_rng)
                resid = out - ys
                if not np.all(np.isfinite(resid)):
                    raise DivergenceError(f"replica {r} diverged")
                d_out = 2.0 * resid / resid.size
                grads = net.backprop(cache, d_out)
                opt.step(grads)
        except DivergenceError:
            excluded[r] = True
        nets.append(net)
        boot.append(idx)
    if excluded.all():
        raise DivergenceError("every global-fit replica diverged")
    return GlobalEnsemble(
        spec=spec, nets=nets, bootstrap_indices=boot, excluded=excluded,
        x_scaler=x_scaler, y_scaler=y_scaler,
        train_points=np.array([[e.xB, e.t, e.Q2] for e in extractions]),
        seed=seed,
    )


def predict_global(ensemble: GlobalEnsemble, xB, t, Q2):
    """Ensemble mean and N-1-normalized spread per CFF at one kinematic point.

    Returns (mean (4,), sigma (4,), extrapolating: bool); the flag marks
    points outside the convex hull of the training kinematics.
    """
    included = [net for net, bad in zip(ensemble.nets, ensemble.excluded) if not bad]
    if not included:
        raise EmptyEnsembleError("no usable replicas in the ensemble")
    x = ensemble.x_scaler.transform(_features(xB, t, Q2)[None, :])
    preds = np.array([
        ensemble.y_scaler.inverse(net.forward(x, training=False)[0])
        for net in included
    ])
    mean = preds.mean(axis=0)
    if preds.shape[0] >= 2:
        shifted = preds - preds[0]
        sigma = shifted.std(axis=0, ddof=1)
    else:
        sigma = np.zeros(4)
    hull = ensemble.hull()
    if hull == "degenerate":
        extrapolating = True
    else:
        extrapolating = bool(hull.find_simplex(np.array([xB, t, Q2])) < 0)
    return mean, sigma, extrapolating


def predict_grid(ensemble: GlobalEnsemble, xB_values, t_values, Q2_values):
    """Dense-grid predictions; yields rows for the surface CSV export."""
    for q2 in Q2_values:
        for xb in xB_values:
            for tt in t_values:
                mean, sigma, extrap = predict_global(ensemble, xb, tt, q2)
                yield {
                    "xB": float(xb), "t": float(tt), "Q2": float(q2),
                    "mean": mean, "sigma": sigma, "extrapolating": extrap,
                }
