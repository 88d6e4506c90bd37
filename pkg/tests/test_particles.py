import math

import numpy as np
import pytest

from coupling.problem import CouplingKind
from grid_core.grids import TimeGrid, TorusGrid
from measures.densities import DensityField, cosine_density
from mfg.solver import solve_mfg
from nash.projection import MasterProjector
from nash.solver import solve_nash
from particles.drifts import (
    DriftKind,
    DriftSpec,
    constant_drift,
    function_drift,
    mfg_drift,
    nash_drift,
    projected_master_drift,
    shifted_drift,
    zero_drift,
)
from particles.metrics import (
    chaos_metrics,
    coupled_gap,
    empirical_w1,
    gronwall_envelope,
    measure_drift_gap,
    pairwise_correlation,
    save_paths,
)
from particles.simulation import TrajectoryEnsemble, draw_initial, simulate
from utils.errors import (
    CouplingViolationError,
    DriftEvaluationError,
    ParameterError,
    UnsupportedDimensionError,
)

GRID = TorusGrid(1, 32)
TIME = TimeGrid(0.0, 1.0, 40)
SEEDS = (11, 12)


@pytest.fixture(scope="module")
def uniform():
    return DensityField.uniform(GRID)


@pytest.fixture(scope="module")
def brownian(uniform):
    return simulate(zero_drift(), uniform, 4, 300, TIME, SEEDS)


class TestSimulation:
    def test_zero_drift_displacement_variance(self, brownian):
        disp = brownian.displacements()
        assert disp.shape == (300, 4, 1)
        assert np.var(disp) == pytest.approx(2.0, abs=0.4)
        assert abs(np.mean(disp)) < 0.25

    def test_paths_stay_on_torus(self, brownian):
        assert np.all(brownian.paths >= 0.0)
        assert np.all(brownian.paths < 1.0)

    def test_same_seeds_same_paths(self, uniform, brownian):
        again = simulate(zero_drift(), uniform, 4, 300, TIME, SEEDS)
        np.testing.assert_array_equal(again.paths, brownian.paths)

    def test_constant_drift_shifts_lifted_paths(self, uniform, brownian):
        drift = constant_drift(0.3)
        shifted = simulate(drift, uniform, 4, 300, TIME, SEEDS)
        times = np.array([TIME.node(k) for k in range(TIME.steps + 1)])
        np.testing.assert_allclose(shifted.lifted - 0.3 * times[None, None, :, None], brownian.lifted,
                                   atol=1e-12)
        assert np.mean(shifted.displacements()) == pytest.approx(np.mean(brownian.displacements()) + 0.3)

    def test_stream_order_permutes_players(self, uniform, brownian):
        order = (2, 0, 3, 1)
        permuted = simulate(zero_drift(), uniform, 4, 300, TIME, SEEDS, stream_order=order)
        np.testing.assert_array_equal(permuted.paths, brownian.paths[:, list(order)])
        with pytest.raises(CouplingViolationError):
            coupled_gap(permuted, brownian)

    def test_invalid_stream_order(self, uniform):
        with pytest.raises(ParameterError):
            simulate(zero_drift(), uniform, 3, 2, TIME, SEEDS, stream_order=(0, 0, 1))

    def test_bad_sizes(self, uniform):
        with pytest.raises(ParameterError):
            simulate(zero_drift(), uniform, 0, 2, TIME, SEEDS)
        with pytest.raises(ParameterError):
            simulate(zero_drift(), uniform, 2, 0, TIME, SEEDS)
        with pytest.raises(ParameterError):
            simulate(zero_drift(2), uniform, 2, 2, TIME, SEEDS)

    def test_bound_violations_are_counted(self, uniform):
        loose = DriftSpec(DriftKind.FIELD, lambda t, step, x: np.full_like(x, 2.0), 1.0)
        ensemble = simulate(loose, uniform, 2, 3, TIME, SEEDS)
        assert ensemble.bound_exceeded == 2 * 3 * TIME.steps


class TestDriftFailures:
    def test_nan_velocity(self, uniform):
        drift = function_drift(lambda t, x: np.full_like(x, np.nan), 1.0)
        with pytest.raises(DriftEvaluationError) as info:
            simulate(drift, uniform, 2, 2, TIME, SEEDS)
        assert (info.value.replica, info.value.player, info.value.step) == (0, 0, 0)

    def test_wrong_shape(self, uniform):
        drift = DriftSpec(DriftKind.FIELD, lambda t, step, x: np.zeros(x.shape[:-1]), 1.0)
        with pytest.raises(DriftEvaluationError):
            simulate(drift, uniform, 2, 2, TIME, SEEDS)

    def test_evaluator_raises(self, uniform):
        def broken(t, step, x):
            raise KeyError("lookup")

        with pytest.raises(DriftEvaluationError) as info:
            simulate(DriftSpec(DriftKind.FIELD, broken, 1.0), uniform, 2, 2, TIME, SEEDS)
        assert info.value.step == 0

    def test_failure_names_replica_and_player(self, uniform):
        start = draw_initial(uniform, 2, 3, SEEDS[0])
        target = start[2, 1, 0]

        def picky(t, step, x):
            if np.any(x == target):
                raise ValueError("cannot evaluate here")
            return np.zeros_like(x)

        with pytest.raises(DriftEvaluationError) as info:
            simulate(DriftSpec(DriftKind.FIELD, picky, 1.0), uniform, 2, 3, TIME, SEEDS)
        assert (info.value.replica, info.value.player, info.value.step) == (2, 1, 0)

    def test_coupled_drift_failure_names_replica_only(self, uniform):
        start = draw_initial(uniform, 2, 3, SEEDS[0])
        target = start[1, 0, 0]

        def picky(t, step, x):
            if np.any(x == target):
                raise ValueError("cannot evaluate here")
            return np.zeros_like(x)

        with pytest.raises(DriftEvaluationError) as info:
            simulate(DriftSpec(DriftKind.NASH, picky, 1.0), uniform, 2, 3, TIME, SEEDS)
        assert (info.value.replica, info.value.player) == (1, None)


class TestSolvedDrifts:
    def test_mfg_drift_respects_bound(self, problem):
        m0 = cosine_density(GRID, 0.5)
        local = solve_mfg(problem, 0.0, m0, CouplingKind.local())
        drift = mfg_drift(local)
        assert drift.kind == DriftKind.MFG_LOCAL
        ensemble = simulate(drift, m0, 3, 8, local.time, SEEDS)
        assert ensemble.bound_exceeded == 0

    def test_nash_drift_single_state(self, problem):
        solution = solve_nash(problem, 2, 0.2, TorusGrid(1, 16))
        drift = nash_drift(solution)
        state = np.array([[0.25], [0.75]])
        velocity = drift.evaluate(0, 0.0, state)
        assert velocity.shape == (1,)
        assert abs(velocity[0]) < 1.0

    def test_projected_master_needs_two_players(self, problem):
        with pytest.raises(ParameterError):
            projected_master_drift(MasterProjector(problem, 0.2, TorusGrid(1, 16)), 1)


class TestMetrics:
    def test_coupled_gap_of_constant_shift(self, uniform, brownian):
        other = simulate(constant_drift(0.05), uniform, 4, 300, TIME, SEEDS)
        gap, stderr = coupled_gap(other, brownian)
        assert gap == pytest.approx(0.05, abs=1e-9)
        assert gap <= 0.05 * TIME.horizon_T + 1e-9
        assert stderr == pytest.approx(0.0, abs=1e-9)

    def test_gap_needs_shared_seeds(self, uniform, brownian):
        other = simulate(zero_drift(), uniform, 4, 300, TIME, (11, 13))
        with pytest.raises(CouplingViolationError):
            coupled_gap(other, brownian)

    def test_measure_drift_gap(self, brownian):
        base = zero_drift()
        assert measure_drift_gap(base, shifted_drift(base, 0.05), brownian) == pytest.approx(0.05)

    def test_gronwall_envelope(self):
        assert gronwall_envelope(0.1, 0.0, 1.0) == pytest.approx(0.1)
        assert gronwall_envelope(0.1, 1.0, 2.0) == pytest.approx(0.2 * math.e ** 2)
        with pytest.raises(ParameterError):
            gronwall_envelope(-0.1, 1.0, 1.0)

    def test_independent_particles_are_uncorrelated(self, brownian):
        correlation, sigma = pairwise_correlation(brownian)
        assert sigma == pytest.approx(1.0 / math.sqrt(299))
        assert abs(correlation) < 4.0 * sigma

    def test_chaos_metrics_against_uniform(self, uniform, brownian):
        report = chaos_metrics(brownian, uniform, curve_stride=10)
        assert 0.0 < report.endpoint_w1 < 0.25
        np.testing.assert_allclose(report.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert len(report.curve_frame()) == 5
        assert "times" not in report.summary()

    def test_chaos_metrics_needs_one_dimension(self):
        paths = np.zeros((2, 3, 2, 2))
        ensemble = TrajectoryEnsemble(paths, paths.copy(), TimeGrid(0.0, 1.0, 1), 0, 0, "flat")
        with pytest.raises(UnsupportedDimensionError):
            chaos_metrics(ensemble, DensityField.uniform(TorusGrid(2, 8)))

    def test_empirical_w1_decreases_with_n(self):
        small, small_err = empirical_w1(100, 20, 0)
        large, large_err = empirical_w1(1600, 20, 0)
        assert small > large > 0.0
        assert small_err > 0.0 and large_err > 0.0

    def test_save_paths(self, tmp_path, brownian):
        target = save_paths(brownian, tmp_path / "dump" / "paths.npz")
        data = np.load(target)
        np.testing.assert_array_equal(data["paths"], brownian.paths)
        assert int(data["noise_seed"]) == SEEDS[1]
        assert int(data["steps"]) == TIME.steps
