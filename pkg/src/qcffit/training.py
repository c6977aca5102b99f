"""Per-bin model fitting against the physics-informed chi-square loss.

The loss for a bin with points {(phi_i, F_i, sigma_i)} is

    L = (1/N) sum_i [F_pred(phi_i; f(x)) - F_i]^2 / sigma_i^2,

where f(x) is the model's CFF output at the bin kinematics x = (xB, Q2, t).
Because the forward model is affine in the four targets, the Bethe-Heitler
curve and the interference basis are precomputed once per bin and every
epoch costs a handful of flops beyond the model's own gradient.

Replica fits derive one seed stream per (root seed, set_id, replica index),
so any parallel schedule reproduces the serial ensemble exactly.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import KinematicBin, stable_set_hash
from .errors import ConfigError, DivergenceError, NonFiniteError
from .models import QdnnModel, build_model, init_circuit_angles, spec_for
from .physics import CFFSet, affine_forward_map, kelly_form_factors
from . import qsim

RESAMPLE_MODES = ("gaussian", "identical")


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for one local fit; all values are decisions, not
    reconstructions (the source analyses publish no optimizer hyperparameters)."""

    epochs: int = 2000
    lr: float = 1e-3
    angle_lr: float = 5e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    start_depth: int = 2           # layer-wise growth entry depth
    early_stop_tol: float = 0.0    # stop once loss <= tol; 0 disables

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0 or self.angle_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.start_depth < 1:
            raise ConfigError("start_depth must be >= 1")

    def growth_milestones(self, final_depth: int) -> list:
        """(epoch, depth) schedule: start_depth at epoch 0, +2 every 25% of
        the budget until final_depth."""
        depths = list(range(self.start_depth, final_depth + 1, 2))
        if not depths or depths[-1] != final_depth:
            depths.append(final_depth)
        if len(depths) == 1:
            return [(0, final_depth)]
        steps = [int(round(i * 0.25 * self.epochs)) for i in range(len(depths))]
        return list(zip(steps, depths))


class BinContext:
    """Precomputed affine forward map plus the data arrays of one bin."""

    def __init__(self, bin: KinematicBin, f_override: np.ndarray = None):
        self.bin = bin
        self.x = bin.features()
        self.phi = bin.phi()
        self.f_data = bin.f_values() if f_override is None else np.asarray(f_override, float)
        self.sigma = bin.sigma()
        kin = bin.kinematics()
        ff = kelly_form_factors(bin.t)
        self.bh, self.basis = affine_forward_map(kin, ff, self.phi)
        self.inv_var = 1.0 / (self.sigma ** 2 * len(self.phi))

    def predict(self, cffs: np.ndarray) -> np.ndarray:
        return self.bh + self.basis @ cffs[:3] + cffs[3]

    def loss(self, cffs: np.ndarray) -> float:
        if not np.all(np.isfinite(cffs)):
            raise NonFiniteError(f"model produced non-finite CFFs: {cffs}")
        resid = self.predict(cffs) - self.f_data
        value = float(np.sum(resid * resid * self.inv_var))
        if not np.isfinite(value):
            raise NonFiniteError(f"loss diverged for set {self.bin.set_id}")
        return value

    def loss_and_dcffs(self, cffs: np.ndarray):
        if not np.all(np.isfinite(cffs)):
            raise NonFiniteError(f"model produced non-finite CFFs: {cffs}")
        resid = self.predict(cffs) - self.f_data
        value = float(np.sum(resid * resid * self.inv_var))
        if not np.isfinite(value):
            raise NonFiniteError(f"loss diverged for set {self.bin.set_id}")
        w = 2.0 * resid * self.inv_var
        d_cffs = np.empty(4)
        d_cffs[:3] = self.basis.T @ w
        d_cffs[3] = np.sum(w)
        return value, d_cffs


def bin_loss(model, bin: KinematicBin, f_override: np.ndarray = None) -> float:
    """Physics-informed loss of a model's current parameters on one bin."""
    ctx = BinContext(bin, f_override)
    return ctx.loss(model.forward(ctx.x))


class Adam:
    """Adaptive-moment optimizer over a dict of named parameter arrays."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, lr_scale=None):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.lr_scale = lr_scale or (lambda name: 1.0)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def register_grown(self, name: str, new_array: np.ndarray):
        """Re-register a parameter array whose leading dimension grew."""
        old_m, old_v = self.m[name], self.v[name]
        self.params[name] = new_array
        self.m[name] = np.zeros_like(new_array)
        self.v[name] = np.zeros_like(new_array)
        self.m[name][: old_m.shape[0]] = old_m
        self.v[name][: old_v.shape[0]] = old_v

    def step(self, grads: dict):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step = (self.lr * self.lr_scale(name)) * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p -= step


def grow_depth(circuit: qsim.CircuitParams, new_depth: int, init_scheme: str,
               init_sigma: float, seed) -> qsim.CircuitParams:
    """Deepen a circuit, preserving trained layers verbatim.

    New layers are drawn from the init stream at their own depth index, so the
    result is independent of when growth happens.
    """
    current = circuit.n_layers
    if new_depth < current:
        raise ConfigError(f"cannot shrink circuit from {current} to {new_depth} layers")
    if new_depth == current:
        return circuit.copy()
    fresh = init_circuit_angles(new_depth, circuit.n_qubits, init_scheme,
                                init_sigma, seed)
    thetas = np.empty((new_depth, circuit.n_qubits, 3))
    thetas[:current] = circuit.thetas
    thetas[current:] = fresh[current:]
    return qsim.CircuitParams(thetas, circuit.entangle_range)


@dataclass
class FitResult:
    set_id: str
    model_class: str
    seed: int
    cffs: CFFSet
    final_loss: float
    initial_loss: float
    epochs_run: int
    loss_trace: np.ndarray
    model: object = None


def fit_local(model_class: str, bin: KinematicBin, config: FitConfig,
              f_override: np.ndarray = None, keep_model: bool = False) -> FitResult:
    """Fit one model to one bin; returns the best-seen parameters.

    The returned loss never exceeds the loss at initialization (best-so-far
    parameters are restored at the end).  The trace is logged per epoch for
    soft monotonicity inspection, not asserted.
    """
    if bin.n_points < 4:
        raise ConfigError(
            f"set {bin.set_id!r} has {bin.n_points} phi points; "
            "a 4-parameter local fit needs at least 4"
        )
    ctx = BinContext(bin, f_override)
    model = build_model(model_class, config.seed,
                        angle_lr_scale=config.angle_lr / config.lr)

    layerwise = (
        isinstance(model, QdnnModel)
        and model.spec.growth_schedule == "layerwise"
        and config.epochs > 0
    )
    if layerwise:
        milestones = dict(config.growth_milestones(model.spec.n_layers))
        start = milestones.pop(0, model.spec.n_layers)
        model.set_circuit_depth(model.circuit.thetas[:start].copy())
    else:
        milestones = {}

    opt = Adam(model.param_arrays(), lr=config.lr, beta1=config.adam_beta1,
               beta2=config.adam_beta2, eps=config.adam_eps, lr_scale=model.lr_scale)

    out = model.forward(ctx.x)
    initial_loss = ctx.loss(out)
    best_loss = initial_loss
    best_flat = model.get_flat()
    best_shape = model.param_arrays()["thetas"].shape if isinstance(model, QdnnModel) else None

    trace = []
    epochs_run = 0
    for epoch in range(config.epochs):
        if epoch in milestones:
            grown = grow_depth(model.circuit, milestones[epoch],
                               model.spec.init_scheme, model.spec.init_sigma,
                               model.angle_seed)
            model.set_circuit_depth(grown.thetas)
            opt.register_grown("thetas", model.circuit.thetas)
        try:
            out, cache = model.forward_cached(ctx.x)
            value, d_cffs = ctx.loss_and_dcffs(out)
            grads = model.backprop(cache, d_cffs)
        except NonFiniteError as exc:
            raise DivergenceError(
                f"{model_class} fit diverged on set {bin.set_id} at epoch {epoch}: {exc}"
            ) from exc
        trace.append(value)
        epochs_run = epoch + 1
        if value < best_loss:
            best_loss = value
            best_flat = model.get_flat()
            best_shape = model.param_arrays()["thetas"].shape \
                if isinstance(model, QdnnModel) else None
        if config.early_stop_tol > 0 and value <= config.early_stop_tol:
            break
        opt.step(grads)

    if isinstance(model, QdnnModel) and best_shape is not None \
            and model.circuit.thetas.shape != best_shape:
        model.set_circuit_depth(np.zeros(best_shape))
    model.set_flat(best_flat)
    final_cffs = model.forward(ctx.x)
    final_loss = ctx.loss(final_cffs)

    return FitResult(
        set_id=bin.set_id,
        model_class=model_class,
        seed=config.seed,
        cffs=CFFSet.from_array(final_cffs),
        final_loss=final_loss,
        initial_loss=initial_loss,
        epochs_run=epochs_run,
        loss_trace=np.array(trace),
        model=model if keep_model else None,
    )


# ----------------------------------------------------------------------------
# Replica ensembles
# ----------------------------------------------------------------------------

OUTLIER_LOSS_FACTOR = 10.0


@dataclass
class ReplicaEnsemble:
    """Per-bin collection of fitted CFF sets from resampled data."""

    set_id: str
    model_class: str
    cffs: np.ndarray                 # (R, 4)
    losses: np.ndarray               # (R,)
    seeds: list
    epochs_run: np.ndarray
    failed: np.ndarray               # fit raised; excluded and recorded
    resample_mode: str = "gaussian"

    def __post_init__(self):
        self.excluded = self.failed.copy()
        ok = ~self.failed
        if ok.sum() >= 2:
            median = float(np.median(self.losses[ok]))
            if median > 0:
                self.excluded |= self.losses > OUTLIER_LOSS_FACTOR * median

    @property
    def n_replicas(self) -> int:
        return self.cffs.shape[0]

    @property
    def included_count(self) -> int:
        return int((~self.excluded).sum())

    @property
    def excluded_count(self) -> int:
        return int(self.excluded.sum())

    def included_cffs(self) -> np.ndarray:
        return self.cffs[~self.excluded]


def replica_seed_streams(root_seed: int, set_id: str, replica_index: int):
    """Deterministic (data_seed, model_seed) pair for one replica.

    Built from a SeedSequence keyed on (root seed, crc32(set_id), index) so the
    stream depends only on identity, never on scheduling.
    """
    ss = np.random.SeedSequence(
        entropy=(int(root_seed) & 0xFFFFFFFF, stable_set_hash(set_id), int(replica_index))
    )
    data_seed, model_seed = (int(s) for s in ss.generate_state(2))
    return data_seed, model_seed


def resample_bin(bin: KinematicBin, data_seed: int, mode: str,
                 noise_scale: float = 1.0) -> np.ndarray:
    """Cross-section values for one replica; 'identical' returns them as-is."""
    if mode == "identical":
        return bin.f_values()
    rng = np.random.default_rng(data_seed)
    return bin.f_values() + noise_scale * bin.sigma() * rng.standard_normal(bin.n_points)


def fit_replicas(model_class: str, bin: KinematicBin, n_replicas: int,
                 resample_mode: str, config: FitConfig,
                 noise_scale: float = 1.0) -> ReplicaEnsemble:
    """Fit one model class to n_replicas resampled copies of a bin.

    gaussian mode redraws each cross-section point within its uncertainty;
    identical mode refits the same data under fresh optimizer seeds, isolating
    algorithmic variability.  Failed fits are flagged, never fatal.
    """
    if n_replicas < 2:
        raise ConfigError(f"n_replicas must be >= 2, got {n_replicas}")
    if resample_mode not in RESAMPLE_MODES:
        raise ConfigError(f"resample_mode must be one of {RESAMPLE_MODES}")
    cffs = np.zeros((n_replicas, 4))
    losses = np.full(n_replicas, np.inf)
    epochs = np.zeros(n_replicas, dtype=int)
    failed = np.zeros(n_replicas, dtype=bool)
    seeds = []
    for r in range(n_replicas):
        data_seed, model_seed = replica_seed_streams(config.seed, bin.set_id, r)
        seeds.append(model_seed)
        f_values = resample_bin(bin, data_seed, resample_mode, noise_scale)
        rep_config = FitConfig(**{**asdict(config), "seed": model_seed})
        try:
            result = fit_local(model_class, bin, rep_config, f_override=f_values)
        except DivergenceError:
            failed[r] = True
            continue
        cffs[r] = result.cffs.as_array()
        losses[r] = result.final_loss
        epochs[r] = result.epochs_run
    return ReplicaEnsemble(
        set_id=bin.set_id,
        model_class=model_class,
        cffs=cffs,
        losses=losses,
        seeds=seeds,
        epochs_run=epochs,
        failed=failed,
        resample_mode=resample_mode,
    )


# ----------------------------------------------------------------------------
# Fit-record persistence: CSV plus a structured JSON mirror
# ----------------------------------------------------------------------------

ENSEMBLE_CSV_COLUMNS = [
    "set_id", "model_class", "replica", "seed", "ReH", "ReE", "ReHt",
    "dvcs_const", "final_loss", "epochs_run", "excluded",
]


def save_ensemble_csv(ensembles, path):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(ENSEMBLE_CSV_COLUMNS)
        for ens in ensembles:
            for r in range(ens.n_replicas):
                writer.writerow([
                    ens.set_id, ens.model_class, r, ens.seeds[r],
                    repr(float(ens.cffs[r, 0])), repr(float(ens.cffs[r, 1])),
                    repr(float(ens.cffs[r, 2])), repr(float(ens.cffs[r, 3])),
                    repr(float(ens.losses[r])), int(ens.epochs_run[r]),
                    int(ens.excluded[r]),
                ])


def ensembles_to_json(ensembles) -> str:
    payload = []
    for ens in ensembles:
        payload.append({
            "set_id": ens.set_id,
            "model_class": ens.model_class,
            "resample_mode": ens.resample_mode,
            "excluded_count": ens.excluded_count,
            "replicas": [
                {
                    "replica": r,
                    "seed": int(ens.seeds[r]),
                    "cffs": [float(v) for v in ens.cffs[r]],
                    "final_loss": float(ens.losses[r]),
                    "epochs_run": int(ens.epochs_run[r]),
                    "excluded": bool(ens.excluded[r]),
                }
                for r in range(ens.n_replicas)
            ],
        })
    return json.dumps({"schema_version": 1, "ensembles": payload},
                      indent=2, sort_keys=True)


def save_ensemble_json(ensembles, path):
    with open(path, "w") as fh:
        fh.write(ensembles_to_json(ensembles))
        fh.write("\n")


def load_ensembles_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    out = []
    for entry in payload["ensembles"]:
        reps = entry["replicas"]
        out.append(ReplicaEnsemble(
            set_id=entry["set_id"],
            model_class=entry["model_class"],
            cffs=np.array([r["cffs"] for r in reps]),
            losses=np.array([r["final_loss"] for r in reps]),
            seeds=[r["seed"] for r in reps],
            epochs_run=np.array([r["epochs_run"] for r in reps], dtype=int),
            failed=np.array([not np.isfinite(r["final_loss"]) for r in reps]),
            resample_mode=entry["resample_mode"],
        ))
    return out
