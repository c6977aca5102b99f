"""Global-fit contracts: spread formula, gradients, hull flags, smoke training."""

import numpy as np
import pytest

from qcffit.errors import ConfigError, EmptyEnsembleError
from qcffit.globalfit import (
    ACTIVATION_CYCLE_DEFAULT,
    GlobalEnsemble,
    GlobalNet,
    GlobalNetSpec,
    LocalExtraction,
    _Scaler,
    predict_global,
    train_global,
)


def toy_extractions(n=12, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        xb = rng.uniform(0.25, 0.5)
        t = -rng.uniform(0.1, 0.5)
        q2 = rng.uniform(1.6, 4.0)
        cffs = np.array([np.sin(3 * xb) + t, np.cos(2 * t), xb * q2 / 4.0, 0.02 * q2])
        sigma = np.abs(cffs) * 0.1 + 0.01
        out.append(LocalExtraction(f"b{i}", xb, t, q2, cffs, sigma))
    return out


class TestSpreadFormula:
    def _two_member_ensemble(self, preds):
        # minimal hand-built ensemble: nets replaced by constant predictors
        class Const:
            def __init__(self, value):
                self.value = np.asarray(value, dtype=float)

            def forward(self, x, training=False):
                return np.tile(self.value, (len(x), 1))

        spec = GlobalNetSpec(batch_norm=False, dropout=0.0)
        ident = _Scaler(np.zeros(4), np.ones(4))
        return GlobalEnsemble(
            spec=spec, nets=[Const(p) for p in preds],
            bootstrap_indices=[None] * len(preds),
            excluded=np.zeros(len(preds), dtype=bool),
            x_scaler=_Scaler(np.zeros(4), np.ones(4)), y_scaler=ident,
            train_points=np.array([[0.3, -0.2, 2.0], [0.4, -0.3, 3.0],
                                   [0.35, -0.15, 2.5], [0.45, -0.4, 3.5]]),
            seed=0,
        )

    def test_two_replicas_zero_and_two(self):
        # sample (N-1) spread of {0, 2} is exactly sqrt(2)
        ens = self._two_member_ensemble([np.zeros(4), 2.0 * np.ones(4)])
        mean, sigma, _ = predict_global(ens, 0.35, -0.2, 2.5)
        np.testing.assert_allclose(mean, 1.0, rtol=1e-15)
        np.testing.assert_allclose(sigma, np.sqrt(2.0), rtol=1e-15)

    def test_identical_replicas_zero_sigma(self):
        ens = self._two_member_ensemble([np.ones(4)] * 5)
        _, sigma, _ = predict_global(ens, 0.35, -0.2, 2.5)
        np.testing.assert_array_equal(sigma, np.zeros(4))

    def test_against_mean_std_oracle(self):
        rng = np.random.default_rng(2)
        preds = [rng.normal(size=4) for _ in range(20)]
        ens = self._two_member_ensemble(preds)
        mean, sigma, _ = predict_global(ens, 0.35, -0.2, 2.5)
        stack = np.array(preds)
        np.testing.assert_allclose(mean, stack.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(
            sigma, np.sqrt(((stack - stack.mean(0)) ** 2).sum(0) / 19), rtol=1e-12
        )

    def test_empty_ensemble(self):
        ens = self._two_member_ensemble([np.zeros(4), np.ones(4)])
        ens.excluded[:] = True
        with pytest.raises(EmptyEnsembleError):
            predict_global(ens, 0.35, -0.2, 2.5)


class TestNetGradients:
    @pytest.mark.parametrize("batch_norm,dropout", [(False, 0.0), (True, 0.0)])
    def test_matches_finite_differences(self, batch_norm, dropout):
        spec = GlobalNetSpec(width=7, n_hidden=3,
                             activations=("tanh", "relu6", "tanhshrink"),
                             batch_norm=batch_norm, dropout=dropout)
        net = GlobalNet(spec, seed=3)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 4))
        y = rng.normal(size=(6, 4))

        def loss():
            out, _ = net._forward_cached(x, training=True,
                                         rng=np.random.default_rng(0))
            # batch-norm running stats drift; freeze them for the check
            return float(np.mean((out - y) ** 2))

        out, cache = net._forward_cached(x, training=True, rng=np.random.default_rng(0))
        grads = net.backprop(cache, 2.0 * (out - y) / out.size)
        params = net.param_arrays()
        if batch_norm:
            bn_mean = [m.copy() for m in net.bn_mean]
            bn_var = [v.copy() for v in net.bn_var]
        rng2 = np.random.default_rng(5)
        names = list(params)
        for name in rng2.choice(names, size=min(6, len(names)), replace=False):
            arr = params[name]
            flat_idx = int(rng2.integers(arr.size))
            h = 1e-6
            orig = arr.ravel()[flat_idx]
            if batch_norm:
                net.bn_mean = [m.copy() for m in bn_mean]
                net.bn_var = [v.copy() for v in bn_var]
            arr.ravel()[flat_idx] = orig + h
            up = loss()
            if batch_norm:
                net.bn_mean = [m.copy() for m in bn_mean]
                net.bn_var = [v.copy() for v in bn_var]
            arr.ravel()[flat_idx] = orig - h
            dn = loss()
            arr.ravel()[flat_idx] = orig
            fd = (up - dn) / (2 * h)
            assert grads[name].ravel()[flat_idx] == pytest.approx(fd, rel=2e-4, abs=1e-7)

    def test_activation_cycle_documented_order(self):
        assert ACTIVATION_CYCLE_DEFAULT == (
            "relu", "leaky_relu", "tanh", "relu6", "tanhshrink",
            "relu", "tanh", "leaky_relu",
        )
        assert GlobalNetSpec().n_hidden == 8
        assert GlobalNetSpec().width == 36

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            GlobalNetSpec(dropout=0.05)
        with pytest.raises(ConfigError):
            GlobalNetSpec(n_hidden=3)


class TestTrainGlobal:
    def test_smoke_two_replicas_distinct(self):
        spec = GlobalNetSpec(width=10, n_hidden=2, activations=("relu", "tanh"),
                             batch_norm=False, dropout=0.0)
        ens = train_global(toy_extractions(6), spec, n_replicas=2, seed=1,
                           epochs=30, lr=1e-2)
        assert ens.n_replicas == 2
        flat0 = np.concatenate([a.ravel() for a in ens.nets[0].param_arrays().values()])
        flat1 = np.concatenate([a.ravel() for a in ens.nets[1].param_arrays().values()])
        assert not np.array_equal(flat0, flat1)

    def test_deterministic_per_seed(self):
        spec = GlobalNetSpec(width=8, n_hidden=2, activations=("relu", "tanh"),
                             batch_norm=True, dropout=0.1)
        a = train_global(toy_extractions(6), spec, 2, seed=7, epochs=15)
        b = train_global(toy_extractions(6), spec, 2, seed=7, epochs=15)
        pa = predict_global(a, 0.35, -0.25, 2.2)
        pb = predict_global(b, 0.35, -0.25, 2.2)
        np.testing.assert_array_equal(pa[0], pb[0])
        np.testing.assert_array_equal(pa[1], pb[1])

    def test_zero_sigma_duplicated_bootstrap_replicas_differ_by_init_only(self):
        # all targets certain and identical resamples: spread comes from init
        rng = np.random.default_rng(0)
        exts = toy_extractions(5)
        for e in exts:
            e.sigma = np.zeros(4)
        spec = GlobalNetSpec(width=8, n_hidden=2, activations=("relu", "tanh"),
                             batch_norm=False, dropout=0.0)
        ens = train_global(exts, spec, 3, seed=3, epochs=20)
        mean, sigma, _ = predict_global(ens, exts[0].xB, exts[0].t, exts[0].Q2)
        assert np.all(np.isfinite(sigma))

    def test_hull_flag(self):
        spec = GlobalNetSpec(width=8, n_hidden=2, activations=("relu", "tanh"),
                             batch_norm=False, dropout=0.0)
        ens = train_global(toy_extractions(20), spec, 2, seed=2, epochs=10)
        inside = ens.train_points.mean(axis=0)
        _, _, extrap_in = predict_global(ens, *inside)
        _, _, extrap_out = predict_global(ens, 0.9, -3.0, 9.0)
        assert not extrap_in
        assert extrap_out

    def test_validation(self):
        spec = GlobalNetSpec(width=8, n_hidden=2, activations=("relu", "tanh"))
        with pytest.raises(ConfigError):
            train_global(toy_extractions(1), spec, 2, seed=0)
        with pytest.raises(ConfigError):
            train_global(toy_extractions(5), spec, 1, seed=0)
