"""Metric contracts, each pinned to an independent oracle where one exists."""

import numpy as np
import pytest

from qcffit.data import DataPoint, KinematicBin
from qcffit.errors import (
    DegenerateDataError,
    InsufficientReplicasError,
    MissingTruthError,
    ZeroSigmaError,
)
from qcffit.metrics import (
    ErrorReport,
    QualifierFeatures,
    accuracy,
    algorithmic_error,
    avg_scaled_error,
    cff_curve,
    ensemble_mean,
    m_chi2,
    m_dvcs,
    methodological_error,
    nonlinearity,
    precision,
    qualifier_calibration,
    qualifier_features,
    qualifier_score,
    quantum_outperformance,
    simpson_integral,
)
from qcffit.physics import CFFSet
from qcffit.pseudodata import BASIC_GENERATOR, synthetic_template_bins
from qcffit.training import FitConfig, ReplicaEnsemble, fit_local


def make_ensemble(cffs, set_id="s1", model_class="cdnn"):
    cffs = np.asarray(cffs, dtype=float)
    n = cffs.shape[0]
    return ReplicaEnsemble(
        set_id=set_id,
        model_class=model_class,
        cffs=cffs,
        losses=np.ones(n),
        seeds=list(range(n)),
        epochs_run=np.ones(n, dtype=int),
        failed=np.zeros(n, dtype=bool),
    )


class TestAccuracyPrecision:
    def test_accuracy_zero_at_truth(self):
        ens = make_ensemble([[1.0, 2.0, 3.0, 0.5]] * 4)
        np.testing.assert_array_equal(
            accuracy(ens, CFFSet(1.0, 2.0, 3.0, 0.5)), np.zeros(4)
        )

    def test_accuracy_offset(self):
        ens = make_ensemble([[1.5, 2.0, 3.0, 0.5], [1.5, 2.0, 3.0, 0.5]])
        got = accuracy(ens, CFFSet(1.0, 2.0, 3.0, 0.5))
        np.testing.assert_allclose(got, [0.5, 0, 0, 0], atol=1e-15)

    def test_accuracy_needs_truth(self):
        with pytest.raises(MissingTruthError):
            accuracy(make_ensemble([[0, 0, 0, 0]] * 2), None)

    def test_precision_identical_replicas(self):
        ens = make_ensemble([[1.0, -1.0, 0.3, 0.0]] * 5)
        np.testing.assert_array_equal(precision(ens), np.zeros(4))

    def test_precision_two_point_population_form(self):
        # {-1, +1}: population std = sqrt(2/2) = 1
        ens = make_ensemble([[-1.0, -1, -1, -1], [1.0, 1, 1, 1]])
        np.testing.assert_allclose(precision(ens), np.ones(4), rtol=1e-15)

    def test_precision_against_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        cffs = rng.normal(size=(40, 4))
        ens = make_ensemble(cffs)
        got = precision(ens)
        mean = cffs.sum(axis=0) / 40
        oracle = np.sqrt(((cffs - mean) ** 2).sum(axis=0) / 40)
        np.testing.assert_allclose(got, oracle, rtol=1e-12)

    def test_precision_needs_two(self):
        with pytest.raises(InsufficientReplicasError):
            precision(make_ensemble([[0, 0, 0, 0]]))

    def test_outlier_exclusion_feeds_metrics(self):
        cffs = np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0], [50.0, 0, 0, 0]])
        ens = ReplicaEnsemble(
            set_id="s", model_class="cdnn", cffs=cffs,
            losses=np.array([1.0, 1.1, 1e6]), seeds=[0, 1, 2],
            epochs_run=np.ones(3, dtype=int), failed=np.zeros(3, dtype=bool),
        )
        assert ens.excluded_count == 1
        np.testing.assert_allclose(ensemble_mean(ens), [1.0, 0, 0, 0])


class TestMChi2:
    def test_unit_residuals_give_four(self):
        # mean differs from truth by exactly the ensemble spread everywhere
        ens, truths = [], []
        for i in range(3):
            cffs = np.array([[0.0] * 4, [2.0] * 4])  # mean 1, sigma 1
            ens.append(make_ensemble(cffs, set_id=f"s{i}"))
            truths.append(CFFSet(0.0, 0.0, 0.0, 0.0))  # residual 1 = sigma
        assert m_chi2(ens, truths) == pytest.approx(4.0, rel=1e-12)

    def test_zero_residuals(self):
        ens = [make_ensemble([[0.0, 0, 0, 0], [2.0, 2, 2, 2]])]
        assert m_chi2(ens, [CFFSet(1.0, 1.0, 1.0, 1.0)]) == pytest.approx(0.0, abs=1e-15)

    def test_zero_sigma_error(self):
        ens = [make_ensemble([[1.0, 0, 0, 0]] * 3)]
        with pytest.raises(ZeroSigmaError):
            m_chi2(ens, [CFFSet(0, 0, 0, 0)])


class TestCurveDistance:
    def test_identical_curves(self):
        f = lambda p: np.sin(np.radians(p))
        assert m_dvcs(f, f) == 0.0

    def test_constant_offset(self):
        lo, hi = 7.5, 352.5
        value = m_dvcs(lambda p: np.full_like(np.asarray(p, float), 0.3),
                       lambda p: np.full_like(np.asarray(p, float), 0.1),
                       (lo, hi))
        assert value == pytest.approx(0.2 * (hi - lo), rel=1e-12)

    def test_against_trapezoid_oracle(self):
        # smooth pair: difference stays positive so |.| introduces no kinks
        rng = np.random.default_rng(5)
        b, c = rng.uniform(0.05, 0.2, size=2)
        fit = lambda p: 1.0 + b * np.cos(np.radians(p)) + c * np.cos(2 * np.radians(p))
        tru = lambda p: 0.4 + 0.5 * b * np.cos(np.radians(p))
        got = m_dvcs(fit, tru)
        grid = np.linspace(7.5, 352.5, 400_001)
        trapezoid = getattr(np, "trapezoid", np.trapz)
        oracle = trapezoid(np.abs(fit(grid) - tru(grid)), grid)
        assert got == pytest.approx(oracle, rel=1e-6)

    def test_triangle_inequality(self):
        f = lambda p: np.cos(np.radians(p))
        g = lambda p: 0.5 * np.cos(np.radians(p)) + 0.1
        h = lambda p: np.sin(np.radians(p / 2.0))
        assert m_dvcs(f, h) <= m_dvcs(f, g) + m_dvcs(g, h) + 1e-6 * m_dvcs(f, h)

    def test_simpson_exact_for_cubic(self):
        # Simpson integrates cubics exactly
        got = simpson_integral(lambda x: x ** 3 - 2 * x ** 2 + 0.5, 0.0, 2.0, 16)
        assert got == pytest.approx(4.0 - 16.0 / 3.0 + 1.0, rel=1e-14)

    def test_cff_curve_matches_bin_truth(self):
        bin = synthetic_template_bins(1, seed=9)[0]
        cffs = BASIC_GENERATOR.cffs_at(bin.xB, bin.t)
        curve = cff_curve(bin, cffs)
        np.testing.assert_allclose(curve(bin.phi()), bin.f_values(), rtol=1e-12)


class TestOutperformance:
    def test_equal(self):
        assert quantum_outperformance(0.4, 0.4) == 0.0

    def test_double(self):
        assert quantum_outperformance(0.8, 0.4) == pytest.approx(1.0)

    def test_half(self):
        assert quantum_outperformance(0.2, 0.4) == pytest.approx(-0.5)

    def test_zero_division(self):
        with pytest.raises(ZeroDivisionError):
            quantum_outperformance(1.0, 0.0)

    def test_sign_contract(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            mc, mq = rng.uniform(0.01, 2.0, size=2)
            xi = quantum_outperformance(mc, mq)
            assert np.sign(xi) == np.sign(mc - mq)


class TestNonlinearity:
    def test_linear_data(self):
        x = np.arange(10.0)
        assert nonlinearity(x, 3.0 * x - 1.0) == pytest.approx(0.0, abs=1e-24)

    def test_alternating_pattern_gives_one(self):
        # symmetric +1,-1,-1,+1 has OLS slope 0, so RSS = TSS
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([1.0, -1.0, -1.0, 1.0])
        slope, intercept = np.polyfit(x, y, 1)  # regression oracle
        assert slope == pytest.approx(0.0, abs=1e-12)
        assert nonlinearity(x, y) == pytest.approx(1.0, rel=1e-12)

    def test_against_ols_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 10, 40)
        y = 2.0 * x + rng.normal(0, 3.0, 40)
        slope, intercept = np.polyfit(x, y, 1)
        rss = np.sum((y - (slope * x + intercept)) ** 2)
        tss = np.sum((y - y.mean()) ** 2)
        assert nonlinearity(x, y) == pytest.approx(rss / tss, rel=1e-10)
        assert 0.0 <= nonlinearity(x, y) <= 1.0

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            nonlinearity([1, 2, 3], [5.0, 5.0, 5.0])
        with pytest.raises(DegenerateDataError):
            nonlinearity([1, 2], [1.0, 2.0])


class TestAvgScaledError:
    def test_zero_scaling(self):
        value, _ = avg_scaled_error(np.ones(5), 0.1 * np.ones(5), s=0.0)
        assert value == 0.0

    def test_uniform_ratio(self):
        f = np.full(8, 2.0)
        sigma = np.full(8, 0.2)  # sigma/F = 0.1
        value, excluded = avg_scaled_error(f, sigma, s=2.0)
        assert value == pytest.approx(0.2, rel=1e-14)
        assert excluded == 0

    def test_hand_summed_mixed_table(self):
        f = np.array([[1.0, 2.0], [4.0, -1.0]])     # one non-positive entry
        sigma = np.array([0.1, 0.4])
        value, excluded = avg_scaled_error(f, sigma, s=1.0)
        expected = np.mean([0.1 / 1.0, 0.4 / 2.0, 0.1 / 4.0])
        assert value == pytest.approx(expected, rel=1e-14)
        assert excluded == 1


class TestQualifier:
    def test_offset_constant(self):
        assert qualifier_score(0.0, 0.0) == pytest.approx(-0.583, abs=1e-15)

    def test_root_of_linear_form(self):
        root = 0.583 / 1.98
        assert qualifier_score(root, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_arithmetic_composition(self):
        assert qualifier_score(0.6, 1.0) == pytest.approx(1.98 * 0.6 - 0.132 - 0.583,
                                                          abs=1e-15)
        assert qualifier_score(0.6, 1.0) == pytest.approx(0.473, abs=1e-12)
        assert qualifier_score(0.5, 0.2) == pytest.approx(0.3806, abs=1e-12)

    def test_monotonicity(self):
        base = qualifier_score(0.3, 0.5)
        assert qualifier_score(0.31, 0.5) > base
        assert qualifier_score(0.3, 0.51) < base

    def test_features_from_bin(self):
        bin = synthetic_template_bins(1, seed=13)[0]
        feats = qualifier_features(bin, s=1.0)
        assert feats.eps_bar_s > 0
        assert 0.0 <= feats.nonlinearity <= 1.0
        assert feats.score == pytest.approx(
            qualifier_score(feats.eps_bar_s, feats.nonlinearity)
        )
        zero = qualifier_features(bin, s=0.0)
        assert zero.eps_bar_s == 0.0
        assert zero.score < 0  # no-noise bins always recommend the classical fit

    def test_feature_validation(self):
        with pytest.raises(DegenerateDataError):
            QualifierFeatures(eps_bar_s=-0.1, nonlinearity=0.2)


class TestQualifierCalibration:
    def test_exact_line(self):
        x = np.linspace(-1, 1, 9)
        pairs = list(zip(x, x))
        slope, intercept, r2 = qualifier_calibration(pairs)
        assert slope == pytest.approx(1.0, rel=1e-12)
        assert intercept == pytest.approx(0.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, rel=1e-12)

    def test_against_regression_oracle(self):
        rng = np.random.default_rng(17)
        x = rng.uniform(-1, 1, 60)
        y = 0.9 * x - 0.05 + rng.normal(0, 0.05, 60)
        slope, intercept, r2 = qualifier_calibration(zip(x, y), outlier_sigmas=1e9)
        o_slope, o_intercept = np.polyfit(x, y, 1)
        assert slope == pytest.approx(o_slope, rel=1e-10)
        assert intercept == pytest.approx(o_intercept, rel=1e-8)

    def test_outlier_exclusion(self):
        x = np.linspace(0, 1, 20)
        y = 2.0 * x.copy()
        y[3] += 50.0  # wild outlier
        slope, intercept, r2 = qualifier_calibration(zip(x, y))
        assert slope == pytest.approx(2.0, rel=1e-6)
        assert r2 == pytest.approx(1.0, rel=1e-6)

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            qualifier_calibration([(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)])


class TestFitBackedErrors:
    def test_identical_replica_spread_zero_for_shared_seed(self):
        # fully deterministic fits with one shared seed collapse to a point
        bin = synthetic_template_bins(1, seed=21)[0]
        config = FitConfig(epochs=8, seed=5)
        results = [fit_local("cdnn", bin, config).cffs.as_array() for _ in range(3)]
        ens = make_ensemble(np.array(results))
        np.testing.assert_array_equal(precision(ens), np.zeros(4))

    def test_algorithmic_error_runs_and_is_nonnegative(self):
        bin = synthetic_template_bins(1, seed=22)[0]
        err = algorithmic_error("cdnn", bin, n=3, config=FitConfig(epochs=6, seed=1))
        assert err.shape == (4,)
        assert np.all(err >= 0)

    def test_methodological_error_runs(self):
        bins = synthetic_template_bins(1, seed=23)
        err = methodological_error("cdnn", bins, BASIC_GENERATOR, param_spread=0.05,
                                   n_draws=2, config=FitConfig(epochs=6, seed=2))
        assert err.shape == (4,)
        assert np.all(err >= 0)

    def test_error_report_rows(self):
        report = ErrorReport(set_id="s1", model_class="cdnn",
                             accuracy=np.ones(4), precision=0.5 * np.ones(4))
        rows = report.rows()
        assert len(rows) == 4
        assert rows[0]["accuracy"] == 1.0
        assert rows[2]["methodological"] is None
