import math

import numpy as np
import pytest

from coupling.mollifier import mollified_eval_empirical
from coupling.problem import CouplingKind, build_problem
from grid_core.grids import TorusGrid
from measures.densities import cosine_density
from measures.empirical import EmpiricalMeasure
from measures.projection import project_to_grid
from mfg.solver import solve_mfg
from nash.averaging import average_value, nash_gap
from nash.projection import MasterProjector, project_master
from nash.residuals import epsilon_schedule, residual_probe, sobol_sample_points
from nash.solver import (
    exchangeability_defect,
    memory_estimate,
    plan_storage,
    relabeling_defect,
    slice_megabytes,
    solve_nash,
)
from utils.errors import MemoryBudgetError, ParameterError

GRID = TorusGrid(1, 16)


def explicit_pair_values(spec, epsilon, grid, coarse_steps):
    """Two-player system at t = 0 by forward Euler on every term, finer than the solver's step"""
    m, h = grid.points_per_axis, grid.spacing
    ham = spec.hamiltonian
    sigma = float(ham.lipschitz_bound)
    steps = max(10 * coarse_steps, math.ceil(spec.horizon * (4.0 / h ** 2 + 2.0 * sigma / h) / 0.5))
    dt = spec.horizon / steps

    coords = grid.coordinates
    fc = spec.mollified(grid, epsilon)
    f0 = np.array([[mollified_eval_empirical(fc, EmpiricalMeasure(np.array([[b]])), a).value
                    for b in coords] for a in coords])
    forcing = np.stack([f0, f0.T])
    x = [np.broadcast_to(coords[:, None], (m, m))[..., None],
         np.broadcast_to(coords[None, :], (m, m))[..., None]]

    def shift(v, k, axis):
        return np.roll(v, -k, axis=axis)

    def second(v, axis):
        return (shift(v, 1, axis) - 2.0 * v + shift(v, -1, axis)) / h ** 2

    g = spec.coupling.terminal(grid.points).reshape(m)
    v = np.stack([np.broadcast_to(g[:, None], (m, m)), np.broadcast_to(g[None, :], (m, m))]).astype(float)
    for _ in range(steps):
        own = [(shift(v[i], 1, i) - shift(v[i], -1, i)) / (2.0 * h) for i in range(2)]
        speed = [ham.gradient_p(x[i], own[i][..., None])[..., 0] for i in range(2)]
        new = np.empty_like(v)
        for i in range(2):
            j = 1 - i
            minus = (v[i] - shift(v[i], -1, j)) / h
            plus = (shift(v[i], 1, j) - v[i]) / h
            cross = 0.5 * (speed[j] + np.abs(speed[j])) * minus + 0.5 * (speed[j] - np.abs(speed[j])) * plus
            rate = (second(v[i], 0) + second(v[i], 1) - ham.value(x[i], own[i][..., None])
                    + 0.5 * sigma * h * second(v[i], i) - cross + forcing[i])
            new[i] = v[i] + dt * rate
        v = new
    return v


@pytest.fixture(scope="module")
def pair():
    return solve_nash(build_problem("default"), 2, 0.2, GRID)


@pytest.fixture(scope="module")
def triple():
    return solve_nash(build_problem("default"), 3, 0.2, TorusGrid(1, 8))


class TestNashSolver:
    def test_decoupled_values_vanish(self):
        solution = solve_nash(build_problem("decoupled"), 2, 0.2, GRID)
        assert np.all(solution.values == 0.0)

    def test_uncoupled_player_ignores_others(self):
        solution = solve_nash(build_problem("uncoupled"), 2, 0.2, GRID)
        v0 = solution.values[0, 0]
        np.testing.assert_allclose(v0, np.broadcast_to(v0[:, :1], v0.shape), atol=1e-10)
        v1 = solution.values[0, 1]
        np.testing.assert_allclose(v1, np.broadcast_to(v1[:1, :], v1.shape), atol=1e-10)

    def test_uncoupled_pair_matches_one_dimensional_hjb(self):
        spec = build_problem("uncoupled")
        solution = solve_nash(spec, 2, 0.2, GRID)
        reference = solve_mfg(spec, 0.0, cosine_density(GRID, 0.5), CouplingKind.local())
        bound = 5.0 * (solution.time.dt + GRID.spacing ** 2)
        assert np.max(np.abs(solution.values[0, 0][:, 0] - reference.u.values[0])) <= bound

    def test_coupled_pair_matches_explicit_scheme(self):
        spec = build_problem("default")
        grid = TorusGrid(1, 32)
        solution = solve_nash(spec, 2, 0.2, grid)
        reference = explicit_pair_values(spec, 0.2, grid, solution.time.steps)
        bound = 5.0 * (solution.time.dt + grid.spacing ** 2)
        assert np.max(np.abs(solution.values[0] - reference)) <= bound
        assert exchangeability_defect(solution, samples=100) <= 1e-8
        assert relabeling_defect(solution, samples=100) <= 1e-8

    def test_terminal_slice(self, pair):
        x = GRID.coordinates
        expected = 0.2 * np.cos(2 * np.pi * x)
        np.testing.assert_allclose(pair.values[-1, 0], np.broadcast_to(expected[:, None], (16, 16)))
        assert pair.stored_nodes[0] == 0
        assert pair.stored_nodes[-1] == pair.time.steps

    def test_exchangeable_and_relabeling_invariant(self, pair, triple):
        for solution in (pair, triple):
            assert exchangeability_defect(solution, samples=200) <= 1e-8
            assert relabeling_defect(solution, samples=200) <= 1e-8

    def test_value_interpolates_nodes(self, pair):
        x = GRID.coordinates
        assert pair.value(1, 0.0, [x[3], x[5]]) == pytest.approx(pair.values[0, 1][3, 5])

    def test_gradient_shape(self, triple):
        assert triple.gradient(0, 2, 0.5).shape == (8, 8, 8)

    def test_single_player_rejected(self):
        with pytest.raises(ParameterError):
            solve_nash(build_problem("default"), 1, 0.2, GRID)

    def test_multidimensional_states_rejected(self):
        with pytest.raises(ParameterError):
            solve_nash(build_problem("default"), 2, 0.2, TorusGrid(2, 8))


class TestMemoryPlanning:
    def test_estimate_scales_with_tensor(self):
        assert slice_megabytes(2, 16) == pytest.approx(8 * 2 * 256 / 2 ** 20)
        assert memory_estimate(3, 16, 2) == pytest.approx(16 * 3 / 2 * memory_estimate(2, 16, 2))

    def test_full_storage_when_it_fits(self):
        assert plan_storage(2, 16, 100, budget_mb=100.0) == 1

    def test_stride_when_budget_is_tight(self):
        budget = 16 * slice_megabytes(2, 16)
        assert plan_storage(2, 16, 100, budget_mb=budget) == 12

    def test_budget_error_carries_estimate(self):
        with pytest.raises(MemoryBudgetError) as info:
            solve_nash(build_problem("default"), 2, 0.2, GRID, budget_mb=1e-3)
        assert info.value.required_mb > info.value.budget_mb
        assert info.value.suggested is None

    def test_budget_error_suggests_smaller_grid(self):
        budget = memory_estimate(3, 16, 2)
        with pytest.raises(MemoryBudgetError) as info:
            plan_storage(3, 64, 100, budget_mb=budget)
        assert info.value.suggested == (3, 16)

    def test_strided_solution_keeps_endpoints(self):
        steps = 40
        budget = 10 * slice_megabytes(2, 16)
        solution = solve_nash(build_problem("default"), 2, 0.2, GRID, steps=steps, budget_mb=budget)
        assert solution.stored_nodes[0] == 0
        assert solution.stored_nodes[-1] == steps
        assert solution.metadata["stride"] > 1


class TestProjection:
    def test_terminal_time_returns_terminal_cost(self, problem):
        projector = MasterProjector(problem, 0.2, GRID)
        x = GRID.coordinates[[4, 9]]
        assert projector.evaluate(0, 1.0, x) == pytest.approx(0.2 * np.cos(2 * np.pi * x[0]))
        assert projector.solves == 0

    def test_cache_ignores_order_of_other_players(self, problem):
        projector = MasterProjector(problem, 0.2, GRID)
        c = GRID.coordinates
        a = projector.evaluate(0, 0.5, [c[1], c[6], c[11]])
        b = projector.evaluate(0, 0.5, [c[1], c[11], c[6]])
        assert a == b
        assert len(projector) == 1

    def test_pair_projection_is_single_bump_value(self, problem):
        projector = MasterProjector(problem, 0.2, GRID)
        c = GRID.coordinates
        b = c[5]
        density = project_to_grid(EmpiricalMeasure(np.array([[b]])), GRID, projector.bandwidth)
        steps = int(round(0.5 / projector.dt_ref))
        reference = solve_mfg(problem, 0.5, density, CouplingKind.mollified(0.2), steps=steps)
        for a in (0, 3, 9):
            assert projector.evaluate(0, 0.5, [c[a], b]) == pytest.approx(reference.u.values[0][a], abs=1e-12)
        assert projector.evaluate(1, 0.5, [b, c[3]]) == pytest.approx(reference.u.values[0][3], abs=1e-12)

    def test_project_master_checks_point_length(self, problem):
        with pytest.raises(ParameterError):
            project_master(problem, 3, 0, 0.5, [0.1, 0.2], 0.2, grid=GRID)

    def test_on_nodes(self, problem):
        projector = MasterProjector(problem, 0.2, GRID)
        values = projector.on_nodes(1, 0.5, [[0, 3], [5, 2]])
        assert values.values.shape == (2,)
        assert values.bandwidth == pytest.approx(0.125)


class TestAveraging:
    def test_quadrature_matches_monte_carlo(self, pair):
        m0 = cosine_density(GRID, 0.5)
        exact = average_value(pair, 0, 0.0, m0, method="quadrature")
        sampled = average_value(pair, 0, 0.0, m0, mc_samples=20_000, seed=3, method="monte_carlo")
        assert exact.method == "quadrature"
        assert sampled.samples == 20_000
        diff = np.abs(exact.values.values - sampled.values.values)
        assert np.all(diff <= 5.0 * sampled.stderr.values + 1e-12)

    def test_auto_picks_quadrature_for_small_tensors(self, pair):
        assert average_value(pair, 1, 0.0, cosine_density(GRID, 0.5)).method == "quadrature"

    def test_bad_arguments(self, pair):
        m0 = cosine_density(GRID, 0.5)
        with pytest.raises(ParameterError):
            average_value(pair, 0, 0.0, m0, mc_samples=0)
        with pytest.raises(ParameterError):
            average_value(pair, 0, 0.0, m0, method="simpson")

    def test_nash_gap_smoke(self, problem, pair):
        gap = nash_gap(problem, 2, 0.2, 0.0, cosine_density(GRID, 0.5), samples=4, solution=pair)
        sup_gap, avg_gap = gap.as_tuple()
        assert math.isfinite(sup_gap) and sup_gap >= 0.0
        assert math.isfinite(avg_gap) and avg_gap >= 0.0


class TestResiduals:
    def test_epsilon_schedule(self):
        assert epsilon_schedule(100, 1.0) == pytest.approx(1.0 / math.log(100))
        assert epsilon_schedule(1000, 0.5) < epsilon_schedule(10, 0.5)
        with pytest.raises(ParameterError):
            epsilon_schedule(1, 1.0)
        with pytest.raises(ParameterError):
            epsilon_schedule(10, 0.0)

    def test_sobol_points_lie_on_nodes(self):
        points = sobol_sample_points(3, GRID, 8, seed=1)
        assert len(points) == 8
        for t, x in points:
            assert 0.1 <= t <= 0.9
            assert x.shape == (3,)
            assert np.all(np.isin(x, GRID.coordinates))

    def test_residual_probe_smoke(self, problem):
        projector = MasterProjector(problem, 0.2, GRID, tol=1e-10)
        points = sobol_sample_points(2, GRID, 2, seed=0)
        diag = residual_probe(problem, 2, 0.2, points, projector=projector)
        assert diag.samples == 2
        assert math.isfinite(diag.r_N)
        assert diag.theta_N == pytest.approx(1.0 + diag.alpha_N ** 2 + (2 * diag.beta_N) ** 2)
        assert projector.solves > 0

    def test_residual_probe_needs_two_players(self, problem):
        with pytest.raises(ParameterError):
            residual_probe(problem, 1, 0.2, [])

    def test_decoupled_residual_vanishes(self):
        points = sobol_sample_points(2, GRID, 2, seed=0)
        diag = residual_probe(build_problem("decoupled"), 2, 0.2, points, grid=GRID)
        assert diag.beta_N == 0.0
        assert diag.r_N <= 1e-10

    def test_time_difference_stays_inside_window(self, problem):
        x = GRID.coordinates[[2, 9]]
        from_zero = MasterProjector(problem, 0.2, GRID)
        residual_probe(problem, 2, 0.2, [(0.5, x)], projector=from_zero)
        restarted = MasterProjector(problem, 0.2, GRID)
        residual_probe(problem, 2, 0.2, [(0.5, x)], projector=restarted, t0=0.5)
        assert restarted.solves < from_zero.solves

    @pytest.mark.slow
    def test_scaled_cross_derivative_stays_bounded(self, problem):
        scaled = []
        for n in (2, 3):
            projector = MasterProjector(problem, 0.2, GRID)
            points = sobol_sample_points(n, GRID, 4, seed=2)
            scaled.append(n * residual_probe(problem, n, 0.2, points, projector=projector).beta_N)
        assert scaled[1] <= 1.5 * scaled[0]
