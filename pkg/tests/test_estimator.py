import time

import numpy as np
import pytest

from conftest import make_dataset
from mrgarch.blocks import BlockPartition, loading_matrix
from mrgarch.errors import ArgumentError, DataError, DimensionError, EstimationError
from mrgarch.estimator import (
    CorrPacking,
    EstimationSpec,
    ParamPacking,
    estimate,
    init_params,
    perturbation_check,
    two_stage_estimate,
)
from mrgarch.likelihood import concentrated_objective
from mrgarch.model import Dataset, InitialState, initial_state_from_data
from mrgarch.simulate import SimConfig, preset_params, simulate


@pytest.fixture(scope="module")
def block_fit():
    """One moderately sized joint fit shared by the slower checks."""
    part = BlockPartition((2, 1))
    truth = preset_params(part)
    data, _ = simulate(SimConfig(truth, t_len=1200, seed=31, burn_in=300))
    spec = EstimationSpec(structure="block", partition=part, multistarts=1,
                          max_iter=150)
    return truth, data, spec, estimate(data, spec)


class TestSpecValidation:
    def test_structure_names(self):
        with pytest.raises(ArgumentError):
            EstimationSpec(structure="banded")

    def test_block_needs_partition(self):
        with pytest.raises(ArgumentError):
            EstimationSpec(structure="block")

    def test_partition_must_cover_assets(self):
        spec = EstimationSpec(structure="block",
                              partition=BlockPartition((2, 2)))
        with pytest.raises(DimensionError):
            spec.loading_for(3)

    def test_equi_is_single_block(self):
        loading = EstimationSpec(structure="equi").loading_for(4)
        assert loading.k == 1
        assert loading.d == 6

    def test_init_mode_names(self):
        with pytest.raises(ArgumentError):
            EstimationSpec(structure="free", init="warm")


class TestInitParams:
    def test_moment_based_values(self, rng, block21):
        data = make_dataset(rng, 3, 300, block21)
        spec = EstimationSpec(structure="block",
                              partition=BlockPartition((2, 1)))
        start = init_params(data, spec)
        assert np.allclose(start.mu, data.returns.mean(axis=0))
        assert np.all(start.beta == 0.6)
        assert np.all(start.gamma == 0.3)
        assert np.allclose(start.omega, 0.1 * data.log_x.mean(axis=0))
        assert np.all(start.c_beta == 0.7)
        assert np.all(start.c_gamma == 0.2)
        yc = block21.condense(data.y)
        assert np.allclose(start.c_omega, 0.1 * yc.mean(axis=0))

    def test_static_start_pins_level(self, rng, block21):
        data = make_dataset(rng, 3, 300, block21)
        spec = EstimationSpec(structure="block", dynamic=False,
                              partition=BlockPartition((2, 1)))
        start = init_params(data, spec)
        assert start.c_beta is None
        yc = block21.condense(data.y)
        assert np.allclose(start.c_omega, yc.mean(axis=0))

    def test_constant_return_column_rejected(self, rng, block21):
        data = make_dataset(rng, 3, 100, block21)
        bad = Dataset(np.column_stack([data.returns[:, :2],
                                       np.full(100, 0.5)]),
                      data.log_x, data.y)
        spec = EstimationSpec(structure="free")
        with pytest.raises(DataError):
            init_params(bad, spec)

    def test_start_filters_cleanly_on_simulated_data(self):
        part = BlockPartition((2, 1))
        data, _ = simulate(SimConfig(preset_params(part), t_len=400, seed=3))
        spec = EstimationSpec(structure="block", partition=part)
        start = init_params(data, spec)
        value = concentrated_objective(start, data)
        assert np.isfinite(value)


class TestPacking:
    def test_round_trip(self, rng, block21):
        data = make_dataset(rng, 3, 200, block21)
        spec = EstimationSpec(structure="block",
                              partition=BlockPartition((2, 1)))
        params = init_params(data, spec)
        init = initial_state_from_data(data, block21)
        packing = ParamPacking(3, block21, True, "condensed", True)
        theta = packing.pack(params, init)
        back, init_back = packing.unpack(theta)
        for f in ("mu", "omega", "beta", "gamma", "c_omega", "c_beta",
                  "c_gamma", "c_xi", "c_phi"):
            assert np.array_equal(getattr(back, f), getattr(params, f))
        assert np.allclose(init_back.h1, init.h1, rtol=1e-15)
        assert np.array_equal(init_back.zeta1, init.zeta1)

    def test_size_for_block_dynamic(self, block21):
        packing = ParamPacking(3, block21, True, "condensed", False)
        assert packing.size == 10 * 3 + 2 + 2 + 2 + 2 + 2
        with_init = ParamPacking(3, block21, True, "condensed", True)
        assert with_init.size == packing.size + 3 + 2

    def test_corr_packing_replaces_only_corr_fields(self, rng, block21):
        data = make_dataset(rng, 3, 200, block21)
        spec = EstimationSpec(structure="block",
                              partition=BlockPartition((2, 1)))
        base = init_params(data, spec)
        packing = CorrPacking(base, False, np.ones(3))
        theta = packing.pack(base, InitialState(np.ones(3), np.zeros(2)))
        theta = theta + 0.01
        params, _ = packing.unpack(theta)
        assert np.array_equal(params.beta, base.beta)
        assert np.allclose(params.c_omega, base.c_omega + 0.01)


class TestJointEstimation:
    def test_objective_dominates_start(self, block_fit):
        _, _, _, fit = block_fit
        assert fit.objective >= fit.diagnostics["init_objective"]

    def test_objective_trace_is_monotone(self, block_fit):
        _, _, _, fit = block_fit
        trace = np.array(fit.diagnostics["objective_trace"])
        assert trace.size > 0
        assert np.all(np.diff(trace) >= -1e-9)

    def test_persistence_recovery(self, block_fit):
        truth, _, _, fit = block_fit
        assert np.all(np.abs(fit.params.beta - truth.beta) < 0.15)
        pi_hat = fit.params.beta + fit.params.gamma
        assert np.all(np.abs(pi_hat - truth.beta - truth.gamma) < 0.08)

    def test_sigma_attached_and_consistent(self, block_fit):
        _, _, _, fit = block_fit
        assert fit.params.sigma is not None
        assert np.array_equal(fit.sigma, fit.params.sigma)
        assert np.array_equal(fit.sigma, fit.report.sigma)

    def test_deterministic_rerun(self, block_fit):
        _, data, spec, fit = block_fit
        again = estimate(data, spec)
        assert np.array_equal(again.theta, fit.theta)
        assert again.objective == fit.objective
        assert again.diagnostics == fit.diagnostics

    def test_local_maximum(self, block_fit):
        _, data, _, fit = block_fit
        assert perturbation_check(fit, data, delta=0.05)

    def test_too_short_sample_rejected(self, rng, block21):
        data = make_dataset(rng, 3, 5, block21)
        spec = EstimationSpec(structure="block",
                              partition=BlockPartition((2, 1)))
        with pytest.raises(EstimationError):
            estimate(data, spec)


class TestEstimatedInit:
    def test_initial_state_becomes_parameter(self):
        part = BlockPartition((2, 1))
        data, _ = simulate(SimConfig(preset_params(part), t_len=500, seed=9))
        spec = EstimationSpec(structure="block", partition=part,
                              init="estimated", multistarts=1, max_iter=40)
        fit = estimate(data, spec)
        sample = initial_state_from_data(data, spec.loading_for(3))
        assert fit.theta.size == 40 + 3 + 2
        assert np.all(fit.init_state.h1 > 0.0)
        fixed_spec = EstimationSpec(structure="block", partition=part,
                                    multistarts=1, max_iter=40)
        fixed_fit = estimate(data, fixed_spec)
        assert fit.objective >= fixed_fit.objective - 1e-6


class TestTwoStage:
    def test_corr_persistence_recovery_and_dominance(self):
        part = BlockPartition((2, 1))
        truth = preset_params(part)
        data, _ = simulate(SimConfig(truth, t_len=1500, seed=77, burn_in=300))
        spec = EstimationSpec(structure="block", partition=part,
                              multistarts=1, max_iter=150)
        two = two_stage_estimate(data, spec)
        joint = estimate(data, spec)
        pi_two = two.params.c_beta + two.params.c_gamma * two.params.c_phi
        pi_true = truth.c_beta + truth.c_gamma * truth.c_phi
        assert np.all(np.abs(pi_two - pi_true) < 0.1)
        assert two.objective <= joint.objective + 1e-6
        assert "stage1_objectives" in two.diagnostics
        assert len(two.diagnostics["stage1_objectives"]) == 3

    def test_faster_than_joint_for_many_assets(self):
        p = 9
        rng = np.random.default_rng(10)
        t_len = 250
        returns = rng.normal(0.02, 1.0, size=(t_len, p))
        log_x = rng.normal(0.0, 0.5, size=(t_len, p))
        d = p * (p - 1) // 2
        y = rng.normal(0.3, 0.1, size=(t_len, d))
        data = Dataset(returns, log_x, y)
        spec = EstimationSpec(structure="free", multistarts=1, max_iter=3)
        t0 = time.perf_counter()
        two_stage_estimate(data, spec)
        t_two = time.perf_counter() - t0
        t0 = time.perf_counter()
        estimate(data, spec)
        t_joint = time.perf_counter() - t0
        assert t_two < t_joint
