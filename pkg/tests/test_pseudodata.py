"""Pseudodata contracts: generator arithmetic, noise statistics, generator fits."""

import numpy as np
import pytest

from qcffit.errors import ConfigError, ConvergenceError
from qcffit.leastsq import levenberg_marquardt, multistart_least_squares
from qcffit.physics import CFFSet
from qcffit.pseudodata import (
    BASIC_GENERATOR,
    GeneratorCoeffs,
    QUALIFIER_SCALINGS,
    REALISTIC_GENERATOR,
    eval_generator,
    fit_generator,
    make_pseudobin,
    qualifier_grid_specs,
    synthetic_template_bins,
    truth_curve,
)


class TestEvalGenerator:
    def test_zero_polynomial_reduces_to_offset(self):
        coeffs = GeneratorCoeffs(0.0, 0.0, 1.0, 2.0, 3.0, 0.42)
        assert eval_generator(coeffs, 0.3, -0.2) == pytest.approx(0.42, abs=1e-15)

    def test_dvcs_row_value(self):
        # direct arithmetic: (0.5*0.09 - 0.41*0.3) * exp(0.05*0.04 + 0.05 + 0.55) + 0.166
        value = eval_generator(BASIC_GENERATOR.dvcs, 0.3, -0.2)
        expected = (0.5 * 0.09 - 0.41 * 0.3) * np.exp(0.05 * 0.04 + (-0.25) * (-0.2) + 0.55) + 0.166
        assert value == pytest.approx(expected, rel=1e-14)
        assert value == pytest.approx(0.0236, abs=5e-5)

    def test_overflow_guard(self):
        coeffs = GeneratorCoeffs(1.0, 1.0, 1000.0, 0.0, 0.0, 0.0)
        with pytest.raises(OverflowError):
            eval_generator(coeffs, 0.3, -1.5)

    def test_realistic_table_is_finite_in_fit_range(self):
        for xb in (0.244, 0.35, 0.475):
            for t in (-0.11, -0.3, -0.45):
                cffs = REALISTIC_GENERATOR.cffs_at(xb, t)
                assert np.all(np.isfinite(cffs.as_array()))


class TestMakePseudobin:
    def setup_method(self):
        self.template = synthetic_template_bins(1, seed=42)[0]

    def test_zero_noise_equals_truth(self):
        pb = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=0.0, seed=1)
        np.testing.assert_array_equal(pb.bin.f_values(), pb.truth_f)

    def test_sigma_column_is_preserved(self):
        pb = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=2.0, seed=1)
        np.testing.assert_array_equal(pb.bin.sigma(), self.template.sigma())

    def test_seed_determinism(self):
        a = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=1.0, seed=7)
        b = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=1.0, seed=7)
        np.testing.assert_array_equal(a.bin.f_values(), b.bin.f_values())
        c = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=1.0, seed=8)
        assert not np.array_equal(a.bin.f_values(), c.bin.f_values())

    def test_noise_mean_matches_truth(self):
        # CLT: mean of 10^4 replicas at one point within 3 sigma/sqrt(N)
        n = 10_000
        idx = 5
        draws = np.empty(n)
        for i in range(n):
            pb = make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=0.5,
                                seed=100 + i)
            draws[i] = pb.bin.f_values()[idx]
        truth = make_pseudobin(self.template, BASIC_GENERATOR, 0.0, 0).truth_f[idx]
        scaled_sigma = 0.5 * self.template.sigma()[idx]
        assert abs(draws.mean() - truth) < 3.0 * scaled_sigma / np.sqrt(n)
        assert draws.std() == pytest.approx(scaled_sigma, rel=0.05)

    def test_negative_noise_scale_rejected(self):
        with pytest.raises(ConfigError):
            make_pseudobin(self.template, BASIC_GENERATOR, noise_scale=-0.5, seed=0)

    def test_qualifier_grid_count(self):
        specs = qualifier_grid_specs(
            self.template,
            center=CFFSet(0, 0, 0, 0.05),
            half_width=CFFSet(2, 2, 2, 0.04),
        )
        assert len(specs) == 5 ** 4 * 4 == 2500
        scalings = {s for _, s in specs}
        assert scalings == set(QUALIFIER_SCALINGS)


class TestSyntheticTemplates:
    def test_deterministic_and_valid(self):
        a = synthetic_template_bins(6, seed=3)
        b = synthetic_template_bins(6, seed=3)
        assert len(a) == 6
        for ba, bb in zip(a, b):
            assert ba.set_id == bb.set_id
            np.testing.assert_array_equal(ba.f_values(), bb.f_values())
        for bin in a:
            kin = bin.kinematics(enforce_cuts=True)  # twist-2 cuts hold
            assert 0 < kin.y < 1
            assert np.all(bin.sigma() > 0)
            assert np.all(bin.f_values() > 0)

    def test_relative_error_span(self):
        bins = synthetic_template_bins(20, seed=11, rel_err_range=(0.03, 0.25))
        rels = [float(np.mean(b.sigma() / np.abs(b.f_values()))) for b in bins]
        assert min(rels) < 0.06
        assert max(rels) > 0.15


class TestLevenbergMarquardt:
    def test_solves_linear_system(self):
        a = np.array([[2.0, 1.0], [1.0, 3.0], [0.5, -1.0]])
        y = np.array([1.0, 2.0, 0.5])
        x, cost, converged = levenberg_marquardt(lambda p: a @ p - y, np.zeros(2))
        assert converged
        expected, *_ = np.linalg.lstsq(a, y, rcond=None)
        np.testing.assert_allclose(x, expected, rtol=1e-6)

    def test_rosenbrock_valley(self):
        def residuals(p):
            return np.array([10.0 * (p[1] - p[0] ** 2), 1.0 - p[0]])

        x, cost, converged = levenberg_marquardt(residuals, np.array([-1.2, 1.0]),
                                                 max_iter=500)
        assert converged
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-6)

    def test_multistart_raises_when_hopeless(self):
        def residuals(p):
            return np.array([np.nan, np.nan])

        with pytest.raises(ConvergenceError):
            multistart_least_squares(lambda p: residuals(p),
                                     lambda rng: rng.normal(size=2), n_starts=3)


class TestFitGenerator:
    def _grid(self):
        xb = np.array([0.25, 0.3, 0.35, 0.4, 0.45, 0.3, 0.35, 0.4])
        t = np.array([-0.15, -0.2, -0.3, -0.25, -0.4, -0.35, -0.15, -0.45])
        return xb, t

    def test_constant_data_recovers_offset(self):
        xb, t = self._grid()
        points = [(x, tt, 0.7, 0.01) for x, tt in zip(xb, t)]
        coeffs, sse, cov = fit_generator(points, n_starts=8, seed=1)
        values = [eval_generator(coeffs, x, tt) for x, tt in zip(xb, t)]
        np.testing.assert_allclose(values, 0.7, atol=1e-5)
        assert sse < 1e-6

    def test_function_value_recovery(self):
        # exact self-consistency: data synthesized from a known row
        truth = BASIC_GENERATOR.ReHt
        xb, t = self._grid()
        points = [(x, tt, eval_generator(truth, x, tt), 0.01) for x, tt in zip(xb, t)]
        coeffs, sse, cov = fit_generator(points, n_starts=25, seed=2)
        got = np.array([eval_generator(coeffs, x, tt) for x, tt in zip(xb, t)])
        want = np.array([v for _, _, v, _ in points])
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)
        assert cov.shape == (6, 6)

    def test_needs_six_distinct_points(self):
        points = [(0.3, -0.2, 1.0, 0.1)] * 8
        with pytest.raises(ConfigError):
            fit_generator(points)


class TestTruthCurve:
    def test_matches_forward_model_affinity(self):
        template = synthetic_template_bins(1, seed=5)[0]
        cffs = CFFSet(-0.9, 1.2, 0.4, 0.03)
        curve = truth_curve(template, cffs)
        assert curve.shape == (template.n_points,)
        zero = truth_curve(template, CFFSet(0, 0, 0, 0))
        offset = truth_curve(template, CFFSet(0, 0, 0, 0.1))
        np.testing.assert_allclose(offset - zero, 0.1, rtol=1e-12)
