import numpy as np
import pytest

from conftest import make_dataset, make_params
from mrgarch.blocks import BlockPartition, identity_loading, loading_matrix
from mrgarch.corrmap import corr_to_vec, vec_to_corr
from mrgarch.errors import DimensionError, DomainError, NumericalError
from mrgarch.model import (
    Dataset,
    FilterEngine,
    InitialState,
    advance_state,
    filter_states,
    initial_state_from_data,
    leverage,
    one_step_forecast,
)


class TestLeverage:
    def test_zero_input(self):
        assert leverage(0.0, 0.5, 0.3) == -0.3

    def test_unit_input(self):
        assert leverage(1.0, 0.5, 0.3) == 0.5

    def test_vectorized(self):
        z = np.array([[0.0, 1.0], [2.0, -1.0]])
        out = leverage(z, np.array([0.1, 0.2]), np.array([0.3, 0.4]))
        assert out.shape == (2, 2)
        assert np.isclose(out[0, 0], -0.3)
        assert np.isclose(out[1, 1], -0.2)


class TestDataset:
    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            Dataset(rng.normal(size=(10, 2)), rng.normal(size=(9, 2)),
                    rng.normal(size=(10, 1)))
        with pytest.raises(DimensionError):
            Dataset(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)),
                    rng.normal(size=(10, 3)))

    def test_non_finite_rejected(self, rng):
        r = rng.normal(size=(10, 2))
        r[3, 1] = np.nan
        with pytest.raises(DomainError):
            Dataset(r, np.zeros((10, 2)), np.zeros((10, 1)))

    def test_from_realized(self, rng):
        t_len, p = 8, 3
        rms = []
        for _ in range(t_len):
            g = rng.standard_normal((p, 2 * p))
            rms.append(g @ g.T / (2 * p))
        data = Dataset.from_realized(rng.normal(size=(t_len, p)), rms)
        assert data.log_x.shape == (t_len, p)
        assert np.allclose(np.exp(data.log_x[0]), np.diag(rms[0]))
        assert np.allclose(vec_to_corr(data.y[0]) * 1.0, _corr_of(rms[0]), atol=1e-8)

    def test_window_and_asset_views(self, rng):
        data = make_dataset(rng, 3, 20)
        sub = data.window(5, 15)
        assert sub.T == 10
        assert np.array_equal(sub.returns, data.returns[5:15])
        one = data.asset(1)
        assert one.p == 1 and one.d == 0


def _corr_of(rm):
    s = 1.0 / np.sqrt(np.diag(rm))
    return s[:, None] * rm * s[None, :]


class TestInitialState:
    def test_sample_average_window(self, rng, block21):
        data = make_dataset(rng, 3, 120, block21)
        init = initial_state_from_data(data, block21)
        assert np.allclose(init.h1, np.exp(data.log_x[:50]).mean(axis=0))
        assert np.allclose(
            init.zeta1, block21.condense(data.y[:50].mean(axis=0))
        )

    def test_short_sample_uses_all(self, rng, block21):
        data = make_dataset(rng, 3, 12, block21)
        init = initial_state_from_data(data, block21)
        assert np.allclose(init.h1, np.exp(data.log_x).mean(axis=0))

    def test_rejects_nonpositive_h(self):
        with pytest.raises(DomainError):
            InitialState(np.array([1.0, 0.0]), np.zeros(1))


class TestFilter:
    def test_three_step_hand_recursion(self):
        """Oracle: re-derive the first three steps with explicit numpy formulas."""
        loading = loading_matrix(BlockPartition((2,)))
        params = make_params(2, loading)
        rng = np.random.default_rng(9)
        data = make_dataset(rng, 2, 3, loading)
        init = InitialState(np.array([1.3, 0.9]), np.array([0.45]))

        states = filter_states(params, data, init)

        log_h = np.log(init.h1)
        zeta = init.zeta1.copy()
        for t in range(3):
            assert np.allclose(states.log_h[t], log_h, atol=1e-12)
            assert np.allclose(states.zeta[t], zeta, atol=1e-12)
            z = (data.returns[t] - params.mu) / np.exp(0.5 * log_h)
            assert np.allclose(states.z[t], z, atol=1e-12)
            rho = loading.expand(zeta)
            assert np.allclose(states.rho[t], rho, atol=1e-12)
            assert np.allclose(states.corr[t], vec_to_corr(rho), atol=1e-10)
            v = (data.log_x[t] - params.xi - params.phi * log_h
                 - params.delta1 * z - params.delta2 * (z * z - 1.0))
            assert np.allclose(states.v[t], v, atol=1e-12)
            vc = (loading.condense(data.y[t]) - params.c_xi
                  - params.c_phi * zeta)
            assert np.allclose(states.v_corr[t], vc, atol=1e-12)
            log_h = (params.omega + params.beta * log_h
                     + params.tau1 * z + params.tau2 * (z * z - 1.0)
                     + params.gamma * data.log_x[t])
            zeta = (params.c_omega + params.c_beta * zeta
                    + params.c_gamma * loading.condense(data.y[t]))

    def test_deterministic_rerun(self, rng, block21):
        data = make_dataset(rng, 3, 200, block21)
        params = make_params(3, block21)
        a = filter_states(params, data)
        b = filter_states(params, data)
        assert np.array_equal(a.log_h, b.log_h)
        assert np.array_equal(a.corr, b.corr)
        assert np.array_equal(a.u, b.u)

    def test_correlations_are_valid(self, rng, block21):
        data = make_dataset(rng, 3, 100, block21)
        states = filter_states(make_params(3, block21), data)
        assert np.array_equal(
            states.corr[:, np.arange(3), np.arange(3)], np.ones((100, 3))
        )
        w = np.linalg.eigvalsh(states.corr)
        assert w[:, 0].min() > 0.0
        # trace of log C equals log det C
        sign, ld = np.linalg.slogdet(states.corr)
        assert np.allclose(states.logdet_corr, ld, atol=1e-10)

    def test_block_means_populated_for_block_loading(self, rng, block21):
        data = make_dataset(rng, 3, 60, block21)
        states = filter_states(make_params(3, block21), data)
        assert states.block_means is not None
        assert states.block_means.shape == (60, 2, 2)

    def test_free_loading_has_no_block_means(self, rng, free3):
        data = make_dataset(rng, 3, 60)
        states = filter_states(make_params(3, free3), data)
        assert states.block_means is None

    def test_static_spec(self, rng, block21):
        data = make_dataset(rng, 3, 80, block21)
        params = make_params(3, block21, dynamic=False)
        states = filter_states(params, data)
        assert states.v_corr is None
        assert np.all(states.zeta == params.c_omega)
        assert np.array_equal(states.corr[0], states.corr[79])
        assert states.u.shape == (80, 3)

    def test_full_measurement_mode(self, rng, block21):
        data = make_dataset(rng, 3, 50, block21)
        params = make_params(3, block21, measurement="full")
        states = filter_states(params, data)
        assert states.v_corr.shape == (50, 3)
        expected = data.y - params.c_xi - params.c_phi * states.rho
        assert np.allclose(states.v_corr, expected, atol=1e-12)
        assert states.u.shape == (50, 6)

    def test_divergent_params_raise(self, rng, block21):
        data = make_dataset(rng, 3, 300, block21)
        params = make_params(3, block21)
        params.beta = np.array([1.6, 1.6, 1.6])
        params.omega = np.array([1.0, 1.0, 1.0])
        with pytest.raises(NumericalError):
            filter_states(params, data)

    def test_engine_cache_consistency(self, rng, block21):
        """Cached and fresh evaluations agree after parameter changes."""
        data = make_dataset(rng, 3, 150, block21)
        engine = FilterEngine(data, block21)
        base = make_params(3, block21)
        first = engine.run(base)
        bumped = make_params(3, block21)
        bumped.beta = base.beta + np.array([1e-6, 0.0, 0.0])
        second = engine.run(bumped)
        again = engine.run(base)
        assert np.array_equal(first.log_h, again.log_h)
        assert np.array_equal(first.zeta, again.zeta)
        fresh = filter_states(bumped, data)
        assert np.array_equal(second.log_h, fresh.log_h)

    def test_input_not_mutated(self, rng, block21):
        data = make_dataset(rng, 3, 40, block21)
        before = data.y.copy()
        filter_states(make_params(3, block21), data)
        assert np.array_equal(data.y, before)


class TestAdvance:
    def test_one_step_matches_recursion(self, rng, block21):
        data = make_dataset(rng, 3, 100, block21)
        params = make_params(3, block21)
        states = filter_states(params, data)
        fc = one_step_forecast(params, data, states=states)
        t = 99
        z = states.z[t]
        expected_log_h = (params.omega + params.beta * states.log_h[t]
                          + params.tau1 * z + params.tau2 * (z * z - 1.0)
                          + params.gamma * data.log_x[t])
        assert np.allclose(np.log(fc.h), expected_log_h, atol=1e-12)
        expected_zeta = (params.c_omega + params.c_beta * states.zeta[t]
                         + params.c_gamma * block21.condense(data.y[t]))
        assert np.allclose(fc.zeta, expected_zeta, atol=1e-12)
        s = np.sqrt(fc.h)
        assert np.allclose(fc.cov, s[:, None] * fc.corr * s[None, :], atol=1e-12)
        assert np.allclose(corr_to_vec(fc.corr), block21.expand(fc.zeta), atol=1e-8)

    def test_advance_state_batched(self, block21):
        params = make_params(3, block21)
        rng = np.random.default_rng(3)
        log_h = rng.normal(size=(5, 3))
        z = rng.normal(size=(5, 3))
        log_x = rng.normal(size=(5, 3))
        zeta = rng.normal(size=(5, 2))
        y_check = rng.normal(size=(5, 2))
        lh, zt = advance_state(params, log_h, z, log_x, zeta, y_check)
        for i in range(5):
            lh1, zt1 = advance_state(
                params, log_h[i], z[i], log_x[i], zeta[i], y_check[i]
            )
            assert np.allclose(lh[i], lh1, atol=1e-15)
            assert np.allclose(zt[i], zt1, atol=1e-15)

    def test_static_advance_keeps_constant_zeta(self, block21):
        params = make_params(3, block21, dynamic=False)
        lh, zt = advance_state(
            params, np.zeros(3), np.zeros(3), np.zeros(3),
            params.c_omega, np.zeros(2),
        )
        assert np.array_equal(zt, params.c_omega)
