"""Closure-test and realistic pseudodata generation.

The four local targets are generated from the shared functional form

    G(xB, t) = (a xB^2 + b xB) exp(c t^2 + d t + e) + f,

with one coefficient row per target.  Two published coefficient tables ship as
defaults: the 'basic' table used for closure testing and the 'realistic' table
fitted to baseline extractions of the JLab-era data.  The parameterization has
no physical meaning; raw coefficients are non-identifiable (e-shifts absorb
multiplicative rescalings of a and b), so generator fits are judged on
function-value recovery only.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import DataPoint, KinematicBin
from .errors import ConfigError
from .leastsq import multistart_least_squares, parameter_covariance
from .physics import (
    CFFSet,
    affine_forward_map,
    derive_kinematics,
    kelly_form_factors,
)
from .physics.bkm import t_minimum

GENERATOR_TARGETS = ("ReH", "ReE", "ReHt", "dvcs")

_EXP_LIMIT = 700.0  # exp() overflow threshold for float64


@dataclass(frozen=True)
class GeneratorCoeffs:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def as_array(self):
        return np.array([self.a, self.b, self.c, self.d, self.e, self.f])


def eval_generator(coeffs: GeneratorCoeffs, xB: float, t: float) -> float:
    """Evaluate G(xB, t); raises OverflowError when the exponent overflows."""
    exponent = coeffs.c * t * t + coeffs.d * t + coeffs.e
    if exponent > _EXP_LIMIT:
        raise OverflowError(
            f"generator exponent {exponent:.3g} overflows exp() at t={t}"
        )
    return (coeffs.a * xB * xB + coeffs.b * xB) * math.exp(exponent) + coeffs.f


@dataclass(frozen=True)
class CffGenerator:
    """One coefficient row per fit target."""

    ReH: GeneratorCoeffs
    ReE: GeneratorCoeffs
    ReHt: GeneratorCoeffs
    dvcs: GeneratorCoeffs

    def coeffs_for(self, target: str) -> GeneratorCoeffs:
        return getattr(self, target)

    def cffs_at(self, xB: float, t: float) -> CFFSet:
        return CFFSet(
            ReH=eval_generator(self.ReH, xB, t),
            ReE=eval_generator(self.ReE, xB, t),
            ReHt=eval_generator(self.ReHt, xB, t),
            dvcs_const=eval_generator(self.dvcs, xB, t),
        )


# Closure-test coefficient table (basic model).
BASIC_GENERATOR = CffGenerator(
    ReH=GeneratorCoeffs(-4.41, 1.68, -9.14, -3.57, 1.54, -1.37),
    ReE=GeneratorCoeffs(144.56, 149.99, 0.32, -1.09, -148.49, -0.31),
    ReHt=GeneratorCoeffs(-1.86, 1.50, -0.29, -1.33, 0.46, -0.98),
    dvcs=GeneratorCoeffs(0.50, -0.41, 0.05, -0.25, 0.55, 0.166),
)

# Realistic table fitted to baseline extractions over the JLab subset.
REALISTIC_GENERATOR = CffGenerator(
    ReH=GeneratorCoeffs(-8.13, 1.82, 35.26, 25.37, 6.26, 3.20),
    ReE=GeneratorCoeffs(6.92, -5.64, 0.81, 0.98, 4.03, 49.71),
    ReHt=GeneratorCoeffs(-8.51, 1.72, 31.11, 22.49, 6.09, 4.77),
    dvcs=GeneratorCoeffs(0.45, -0.45, 4.40, 2.91, 0.13, 0.08),
)

GENERATOR_TABLES = {"basic": BASIC_GENERATOR, "realistic": REALISTIC_GENERATOR}


# ----------------------------------------------------------------------------
# Pseudodata bins
# ----------------------------------------------------------------------------

@dataclass
class PseudoBin:
    """A kinematic bin with known truth: generator CFFs and noiseless curve."""

    bin: KinematicBin
    truth_cffs: CFFSet
    truth_f: np.ndarray
    noise_scale: float
    seed: int


def truth_curve(bin: KinematicBin, cffs: CFFSet) -> np.ndarray:
    kin = bin.kinematics()
    ff = kelly_form_factors(bin.t)
    bh, basis = affine_forward_map(kin, ff, bin.phi())
    return bh + basis @ np.array([cffs.ReH, cffs.ReE, cffs.ReHt]) + cffs.dvcs_const


def make_pseudobin(template_bin: KinematicBin, generator: CffGenerator,
                   noise_scale: float, seed: int,
                   cffs: CFFSet = None) -> PseudoBin:
    """Pseudodata replica on the template's phi grid and uncertainties.

    Truth CFFs come from the generator at the bin kinematics (or are passed
    explicitly, e.g. for qualifier grids); noisy values are drawn as
    Normal(truth, noise_scale * sigma_F).  noise_scale 0 reproduces the truth
    exactly.  The per-point sigma_F column is left untouched; it is the
    experiment's quoted uncertainty, not the injected noise.
    """
    if noise_scale < 0:
        raise ConfigError(f"noise_scale must be >= 0, got {noise_scale}")
    truth = cffs if cffs is not None else generator.cffs_at(template_bin.xB, template_bin.t)
    f_true = truth_curve(template_bin, truth)
    if noise_scale == 0:
        noisy = f_true.copy()
    else:
        rng = np.random.default_rng(seed)
        noisy = f_true + noise_scale * template_bin.sigma() * rng.standard_normal(
            template_bin.n_points
        )
    return PseudoBin(
        bin=template_bin.with_f(noisy),
        truth_cffs=truth,
        truth_f=f_true,
        noise_scale=noise_scale,
        seed=seed,
    )


# ----------------------------------------------------------------------------
# Synthetic template bins (experimental-style kinematics and uncertainties)
# ----------------------------------------------------------------------------

PHI_GRID_DEFAULT = np.arange(7.5, 360.0, 15.0)  # 24 points, JLab-style binning

_BEAM_ENERGIES = (5.75, 8.521, 10.591)


def synthetic_template_bins(n_bins: int, seed: int, n_phi: int = 24,
                            rel_err_range=(0.03, 0.25),
                            generator: CffGenerator = BASIC_GENERATOR) -> list:
    """Experimental-style template bins with valid twist-2 kinematics.

    Cross sections are filled from the generator truth so the sigma_F column
    can be defined relative to a realistic scale; bins span a range of
    relative uncertainties so downstream noise studies cover the qualifier's
    feature space.
    """
    rng = np.random.default_rng(seed)
    phi = np.linspace(7.5, 352.5, n_phi) if n_phi != 24 else PHI_GRID_DEFAULT.copy()
    bins = []
    attempt = 0
    while len(bins) < n_bins:
        attempt += 1
        if attempt > 200 * n_bins:
            raise ConfigError("could not sample enough valid kinematic bins")
        k = float(rng.choice(_BEAM_ENERGIES))
        q2 = float(rng.uniform(1.6, 6.0 if k > 6 else 3.5))
        xb = float(rng.uniform(0.25, 0.5))
        m = 0.938272
        y = q2 / (2.0 * m * k * xb)
        if not 0.05 < y < 0.85:
            continue
        eps2 = 4.0 * xb * xb * m * m / q2
        tmin = t_minimum(q2, xb, eps2)
        t_hi = 1.05 * abs(tmin)          # just inside the physical region
        t_lo = 0.25 * q2                 # twist-2 cut boundary
        if t_hi >= t_lo:
            continue
        t = -float(rng.uniform(t_hi, t_lo))
        bin_id = f"syn{len(bins):03d}"
        kin = derive_kinematics(k, q2, xb, t, enforce_cuts=True)
        ff = kelly_form_factors(t)
        bh, basis = affine_forward_map(kin, ff, phi)
        truth = generator.cffs_at(xb, t)
        f_vals = bh + basis @ np.array([truth.ReH, truth.ReE, truth.ReHt]) + truth.dvcs_const
        if np.any(f_vals <= 0):
            continue
        lo, hi = rel_err_range
        base_rel = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        jitter = rng.uniform(0.8, 1.2, size=phi.size)
        sigma = base_rel * np.abs(f_vals) * jitter
        points = [DataPoint(float(p), float(f), float(s))
                  for p, f, s in zip(phi, f_vals, sigma)]
        bins.append(KinematicBin(bin_id, k, q2, xb, t, points))
    return bins


# ----------------------------------------------------------------------------
# Qualifier grids: 5 values per CFF x 4 error scalings = 2500 per bin
# ----------------------------------------------------------------------------

QUALIFIER_SCALINGS = (0.0, 0.5, 1.0, 2.0)


def qualifier_cff_values(center: CFFSet, half_width: CFFSet, n_values: int = 5):
    """Per-target arrays of n evenly spaced values spanning center +- half_width."""
    c = center.as_array()
    w = half_width.as_array()
    return [np.linspace(c[i] - w[i], c[i] + w[i], n_values) for i in range(4)]


def qualifier_grid_specs(bin: KinematicBin, center: CFFSet, half_width: CFFSet,
                         n_values: int = 5, scalings=QUALIFIER_SCALINGS):
    """All (CFFSet, noise_scale) combinations for one bin's qualifier grid.

    n_values^4 CFF combinations times len(scalings) error scalings; the
    default 5 and (0, 0.5, 1, 2) yield 2500 replica specs per kinematic point.
    """
    grids = qualifier_cff_values(center, half_width, n_values)
    specs = []
    for reh in grids[0]:
        for ree in grids[1]:
            for reht in grids[2]:
                for dvcs in grids[3]:
                    for s in scalings:
                        specs.append((CFFSet(float(reh), float(ree), float(reht),
                                             float(dvcs)), float(s)))
    return specs


# ----------------------------------------------------------------------------
# Generator fitting (nonlinear least squares over extracted CFF points)
# ----------------------------------------------------------------------------

def fit_generator(points, n_starts: int = 20, seed: int = 0, max_iter: int = 300):
    """Fit one coefficient row to extracted values of a single target.

    points: iterable of (xB, t, value, sigma); needs >= 6 distinct (xB, t).
    Returns (GeneratorCoeffs, sse, covariance).  Quality should be judged on
    the fitted function's values, not the raw coefficients.
    """
    rows = [(float(x), float(t), float(v), float(s)) for x, t, v, s in points]
    distinct = {(r[0], r[1]) for r in rows}
    if len(distinct) < 6:
        raise ConfigError(
            f"fit_generator needs >= 6 distinct (xB, t) points, got {len(distinct)}"
        )
    xb = np.array([r[0] for r in rows])
    t = np.array([r[1] for r in rows])
    val = np.array([r[2] for r in rows])
    sig = np.array([r[3] for r in rows])
    if np.any(sig <= 0):
        raise ConfigError("all sigmas must be positive")

    def residuals(p):
        a, b, c, d, e, f = p
        expo = c * t * t + d * t + e
        expo = np.where(expo > _EXP_LIMIT, np.nan, expo)
        model = (a * xb * xb + b * xb) * np.exp(expo) + f
        return (model - val) / sig

    scale = max(float(np.max(np.abs(val))), 1.0)

    def sample_start(rng):
        start = rng.normal(0.0, 1.0, size=6)
        start[4] = rng.normal(0.0, 0.5)          # e: keep exp() tame initially
        start[5] = rng.normal(np.mean(val), 0.5 * scale)  # f near the data level
        return start

    best, sse2 = multistart_least_squares(residuals, sample_start,
                                          n_starts=n_starts, seed=seed,
                                          max_iter=max_iter)
    cov = parameter_covariance(residuals, best, n_data=len(rows))
    coeffs = GeneratorCoeffs(*[float(v) for v in best])
    return coeffs, 2.0 * sse2, cov


def fit_generator_all(extractions, **kw):
    """Fit every target; extractions maps target -> list of (xB, t, value, sigma)."""
    fitted = {}
    reports = {}
    for target in GENERATOR_TARGETS:
        coeffs, sse, cov = fit_generator(extractions[target], **kw)
        fitted[target] = coeffs
        reports[target] = {"sse": sse, "cov": cov}
    generator = CffGenerator(ReH=fitted["ReH"], ReE=fitted["ReE"],
                             ReHt=fitted["ReHt"], dvcs=fitted["dvcs"])
    return generator, reports
