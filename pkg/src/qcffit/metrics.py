"""Evaluation quantities for local extractions and model selection.

Conventions worth noting:

* precision uses the population form (divide by N); the global-fit spread
  uses N-1 and lives in globalfit.  Both match their printed definitions.
* curve distance integrates |F_fit - F_true| over phi in degrees with
  composite Simpson quadrature (2048 intervals by default), so its value
  carries units of nb/GeV^4 * deg.
* the model-selection score is the fixed linear form
  1.98 * avg_scaled_error - 0.132 * nonlinearity - 0.583; positive values
  recommend the quantum regressor.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import KinematicBin
from .errors import (
    DegenerateDataError,
    InsufficientReplicasError,
    MissingTruthError,
    ZeroSigmaError,
)
from .physics import CFFSet
from .training import FitConfig, ReplicaEnsemble, fit_local, fit_replicas

CFF_NAMES = ("ReH", "ReE", "ReHt", "dvcs_const")

QUALIFIER_ERROR_WEIGHT = 1.98
QUALIFIER_NONLINEARITY_WEIGHT = -0.132
QUALIFIER_OFFSET = -0.583

PHI_RANGE_DEFAULT = (7.5, 352.5)
SIMPSON_INTERVALS_DEFAULT = 2048


# ----------------------------------------------------------------------------
# Ensemble statistics
# ----------------------------------------------------------------------------

def ensemble_mean(ensemble: ReplicaEnsemble) -> np.ndarray:
    cffs = ensemble.included_cffs()
    if cffs.shape[0] < 1:
        raise InsufficientReplicasError(f"no usable replicas for set {ensemble.set_id}")
    return cffs.mean(axis=0)


def accuracy(ensemble: ReplicaEnsemble, truth: CFFSet) -> np.ndarray:
    """|ensemble mean - truth| per CFF; defined for pseudodata only."""
    if truth is None:
        raise MissingTruthError(
            f"set {ensemble.set_id} has no generator truth; accuracy is undefined"
        )
    return np.abs(ensemble_mean(ensemble) - truth.as_array())


def precision(ensemble: ReplicaEnsemble) -> np.ndarray:
    """Population standard deviation (divide by N) of the included replicas.

    Computed on deviations from the first replica: the spread is shift
    invariant, and this keeps the result exactly zero for bitwise-identical
    replicas (fl(mean(a, a, a)) need not equal a).
    """
    cffs = ensemble.included_cffs()
    if cffs.shape[0] < 2:
        raise InsufficientReplicasError(
            f"precision needs >= 2 included replicas, set {ensemble.set_id} has "
            f"{cffs.shape[0]}"
        )
    shifted = cffs - cffs[0]
    return shifted.std(axis=0, ddof=0)


def algorithmic_error(model_class: str, bin: KinematicBin, n: int,
                      config: FitConfig) -> np.ndarray:
    """Spread of extractions over identical data copies.

    Only the per-replica optimizer/init seeds vary; isolates the variability
    of the extraction algorithm itself.
    """
    ens = fit_replicas(model_class, bin, n_replicas=n, resample_mode="identical",
                       config=config)
    return precision(ens)


def methodological_error(model_class: str, bins, generator, param_spread: float,
                         n_draws: int, config: FitConfig,
                         noise_scale: float = 0.0, seed: int = 0) -> np.ndarray:
    """Residual spread under perturbations of the truth-generating coefficients.

    Each draw rescales every generator coefficient by (1 + u), u uniform in
    +-param_spread, regenerates the pseudodata, refits, and records the
    residual (extracted - perturbed truth).  Returns the per-CFF standard
    deviation of the pooled residuals.
    """
    from .pseudodata import CffGenerator, GeneratorCoeffs, make_pseudobin

    if n_draws < 2:
        raise InsufficientReplicasError("methodological error needs >= 2 draws")
    rng = np.random.default_rng(seed)
    residuals = []
    for draw in range(n_draws):
        perturbed = {}
        for target in ("ReH", "ReE", "ReHt", "dvcs"):
            coeffs = generator.coeffs_for(target).as_array()
            coeffs = coeffs * (1.0 + rng.uniform(-param_spread, param_spread, 6))
            perturbed[target] = GeneratorCoeffs(*coeffs)
        gen = CffGenerator(**perturbed)
        for bin in bins:
            pb = make_pseudobin(bin, gen, noise_scale,
                                seed=int(rng.integers(0, 2 ** 31)))
            result = fit_local(model_class, pb.bin, config)
            residuals.append(result.cffs.as_array() - pb.truth_cffs.as_array())
    residuals = np.array(residuals)
    return residuals.std(axis=0, ddof=0)


def m_chi2(ensembles, truths) -> float:
    """Sum over the four targets of the mean reduced residual across bins.

    sigma per (bin, target) is the ensemble precision; zero spread on any
    entry is an error rather than a silent infinity.
    """
    if len(ensembles) == 0:
        raise InsufficientReplicasError("m_chi2 needs at least one bin")
    means = np.array([ensemble_mean(e) for e in ensembles])
    sig = np.array([precision(e) for e in ensembles])
    tru = np.array([t.as_array() for t in truths])
    if np.any(sig == 0):
        raise ZeroSigmaError("ensemble precision is zero for some (bin, target)")
    reduced = (means - tru) ** 2 / sig ** 2
    return float(reduced.mean(axis=0).sum())


# ----------------------------------------------------------------------------
# Curve distance and outperformance
# ----------------------------------------------------------------------------

def simpson_integral(fn, lo: float, hi: float,
                     n_intervals: int = SIMPSON_INTERVALS_DEFAULT) -> float:
    """Composite Simpson rule; fn must accept a vector of abscissae."""
    if n_intervals % 2:
        n_intervals += 1
    x = np.linspace(lo, hi, n_intervals + 1)
    y = np.asarray(fn(x), dtype=float)
    h = (hi - lo) / n_intervals
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def m_dvcs(fit_curve, truth_curve, phi_range=PHI_RANGE_DEFAULT,
           n_intervals: int = SIMPSON_INTERVALS_DEFAULT) -> float:
    """Integrated absolute deviation between two cross-section curves.

    Curves are callables of phi in degrees; the default window 7.5..352.5
    matches the usual phi acceptance of the datasets.
    """
    lo, hi = phi_range
    return simpson_integral(lambda p: np.abs(np.asarray(fit_curve(p)) -
                                             np.asarray(truth_curve(p))),
                            lo, hi, n_intervals)


def cff_curve(bin: KinematicBin, cffs: CFFSet):
    """Callable phi_deg -> F predicted from a CFF set at this bin's kinematics."""
    from .physics import affine_forward_map, kelly_form_factors

    kin = bin.kinematics()
    ff = kelly_form_factors(bin.t)
    vec = np.array([cffs.ReH, cffs.ReE, cffs.ReHt])
    const = cffs.dvcs_const

    def curve(phi_deg):
        bh, basis = affine_forward_map(kin, ff, phi_deg)
        return bh + basis @ vec + const

    return curve


def quantum_outperformance(m_cdnn: float, m_qdnn: float) -> float:
    """M_classical / M_quantum - 1; positive when the quantum fit is closer."""
    if m_qdnn == 0:
        raise ZeroDivisionError("quantum curve distance is zero")
    return m_cdnn / m_qdnn - 1.0


# ----------------------------------------------------------------------------
# Qualifier features and score
# ----------------------------------------------------------------------------

def nonlinearity(x, y) -> float:
    """Ratio of the linear-fit residual sum of squares to the total sum of squares.

    0 marks perfectly linear data; values near 1 mean the straight-line fit
    explains nothing.  Always within [0, 1] for ordinary least squares.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 3:
        raise DegenerateDataError(f"nonlinearity needs >= 3 paired points, got {x.size}")
    y_bar = y.mean()
    tss = float(np.sum((y - y_bar) ** 2))
    if tss == 0:
        raise DegenerateDataError("all y values are equal; nonlinearity undefined")
    x_bar = x.mean()
    sxx = float(np.sum((x - x_bar) ** 2))
    slope = float(np.sum((x - x_bar) * (y - y_bar))) / sxx if sxx > 0 else 0.0
    resid = y - (y_bar + slope * (x - x_bar))
    return float(np.sum(resid ** 2)) / tss


def avg_scaled_error(f_values, sigma, s: float):
    """Mean of s*sigma_i/F over all (point, replica) pairs with F > 0.

    f_values may be (N,) for one realization or (R, N) for replicas; sigma is
    per-point.  Returns (value, n_excluded) where excluded counts pairs with
    non-positive cross section.
    """
    f = np.atleast_2d(np.asarray(f_values, dtype=float))
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), f.shape)
    valid = f > 0
    n_excluded = int((~valid).sum())
    if not np.any(valid):
        return 0.0, n_excluded
    value = float(np.mean(s * sig[valid] / f[valid]))
    return value, n_excluded


@dataclass
class QualifierFeatures:
    eps_bar_s: float
    nonlinearity: float
    score: float = field(init=False)
    measured_outperformance: float = None

    def __post_init__(self):
        if self.eps_bar_s < 0:
            raise DegenerateDataError("average scaled error must be >= 0")
        self.score = qualifier_score(self.eps_bar_s, self.nonlinearity)


def qualifier_score(eps_bar_s: float, nonlin: float) -> float:
    """Fixed linear selection score; positive recommends the quantum model."""
    return (QUALIFIER_ERROR_WEIGHT * eps_bar_s
            + QUALIFIER_NONLINEARITY_WEIGHT * nonlin
            + QUALIFIER_OFFSET)


def qualifier_features(bin: KinematicBin, s: float, f_replicas=None) -> QualifierFeatures:
    """Features for one bin: scaled-error mean plus the mean per-replica
    nonlinearity of the (phi, F) signal."""
    f = bin.f_values()[None, :] if f_replicas is None else np.atleast_2d(f_replicas)
    eps, _ = avg_scaled_error(f, bin.sigma(), s)
    phi = bin.phi()
    nl = float(np.mean([nonlinearity(phi, row) for row in f]))
    return QualifierFeatures(eps_bar_s=eps, nonlinearity=nl)


def qualifier_calibration(score_pairs, outlier_sigmas: float = 3.0,
                          max_rounds: int = 2):
    """OLS regression of measured outperformance on the qualifier score.

    score_pairs: iterable of (score, outperformance).  Residual outliers
    beyond outlier_sigmas standard deviations are dropped for up to
    max_rounds refits.  Returns (slope, intercept, r_squared).
    """
    pairs = np.asarray(list(score_pairs), dtype=float)
    if pairs.ndim != 2 or pairs.shape[0] < 3:
        raise DegenerateDataError("calibration needs >= 3 (score, outperformance) pairs")
    x, y = pairs[:, 0], pairs[:, 1]
    keep = np.ones(x.size, dtype=bool)
    slope = intercept = r2 = None
    for _ in range(max_rounds + 1):
        xs, ys = x[keep], y[keep]
        if xs.size < 3 or np.ptp(xs) == 0:
            raise DegenerateDataError("calibration input degenerate after exclusion")
        sxx = np.sum((xs - xs.mean()) ** 2)
        slope = float(np.sum((xs - xs.mean()) * (ys - ys.mean())) / sxx)
        intercept = float(ys.mean() - slope * xs.mean())
        resid = ys - (slope * xs + intercept)
        tss = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / tss if tss > 0 else 1.0
        sigma = resid.std()
        if sigma == 0:
            break
        flags = np.abs(y - (slope * x + intercept)) <= outlier_sigmas * sigma
        if np.array_equal(flags & keep, keep):
            break
        keep &= flags
    return slope, intercept, r2


# ----------------------------------------------------------------------------
# Per-bin error report
# ----------------------------------------------------------------------------

@dataclass
class ErrorReport:
    """Per-CFF error summary of one ensemble; entries are all >= 0."""

    set_id: str
    model_class: str
    accuracy: np.ndarray = None
    precision: np.ndarray = None
    algorithmic: np.ndarray = None
    methodological: np.ndarray = None

    def rows(self):
        out = []
        for i, name in enumerate(CFF_NAMES):
            row = {"set_id": self.set_id, "model_class": self.model_class,
                   "target": name}
            for kind in ("accuracy", "precision", "algorithmic", "methodological"):
                arr = getattr(self, kind)
                row[kind] = float(arr[i]) if arr is not None else None
            out.append(row)
        return out
