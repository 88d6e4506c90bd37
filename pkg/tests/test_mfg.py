import numpy as np
import pytest

from coupling.problem import CouplingKind, build_problem
from grid_core.fields import ScalarField
from grid_core.grids import TimeGrid, TorusGrid
from grid_core.operators import laplacian_values
from measures.densities import DensityField, cosine_density
from mfg.diagnostics import (
    derivative_check,
    flow_consistency_gap,
    measure_lipschitz_probe,
    regularity_diagnostics,
    smooth_perturbation,
    uniqueness_probe,
)
from mfg.linearized import energy_identity_probe, solve_linearized_first, solve_linearized_second
from mfg.solver import default_steps, manufactured_sources, solve_mfg
from mfg.stability import stability_gap
from pde_engines.diffusion import ImplicitDiffusion
from utils.errors import DivergenceError, InvalidDensityError, ParameterError

GRID = TorusGrid(1, 32)
M0 = cosine_density(GRID, 0.5)


@pytest.fixture(scope="module")
def local_solution():
    return solve_mfg(build_problem("default"), 0.0, M0, CouplingKind.local(), tol=1e-10)


@pytest.fixture(scope="module")
def mollified_solution():
    return solve_mfg(build_problem("default"), 0.0, M0, CouplingKind.mollified(0.2), tol=1e-11)


class TestSolver:
    def test_boundary_data_exact(self, local_solution):
        spec = build_problem("default")
        np.testing.assert_array_equal(local_solution.u.values[-1], spec.coupling.terminal_values(GRID))
        np.testing.assert_array_equal(local_solution.m.values[0], M0.values)

    def test_density_flow_is_conservative(self, local_solution):
        np.testing.assert_allclose(local_solution.m.masses(), 1.0, atol=1e-10)
        assert local_solution.m.values.min() >= 0.0
        assert local_solution.fixed_point_residual < 1e-10
        assert local_solution.iterations == len(local_solution.residual_history)

    def test_default_steps_follow_cfl(self):
        assert default_steps(GRID, 1.0, 1.0) == 36

    def test_decoupled_problem_is_pure_diffusion(self):
        solution = solve_mfg(build_problem("decoupled"), 0.0, M0, CouplingKind.local(), tol=1e-12)
        np.testing.assert_array_equal(solution.u.values, 0.0)
        diffusion = ImplicitDiffusion(GRID, solution.time.dt)
        dt, h = solution.time.dt, GRID.spacing
        expected = M0.values
        # Lax-Friedrichs viscosity sigma h / 2 with sigma = 1 acts even without drift
        for k in range(1, solution.time.node_count):
            expected = diffusion.solve(expected + 0.5 * dt * h * laplacian_values(expected, 1, h))
            np.testing.assert_allclose(solution.m.values[k], expected, atol=1e-11)

    def test_uncoupled_value_ignores_density(self):
        spec = build_problem("uncoupled")
        a = solve_mfg(spec, 0.0, M0, CouplingKind.local())
        b = solve_mfg(spec, 0.0, cosine_density(GRID, 0.8, 3), CouplingKind.local())
        np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-14)

    def test_local_coupling_needs_positive_density(self):
        with pytest.raises(InvalidDensityError):
            solve_mfg(build_problem("default"), 0.0, DensityField.point_mass(GRID, 3), CouplingKind.local())

    def test_mollified_coupling_accepts_point_mass(self):
        solution = solve_mfg(build_problem("default"), 0.0, DensityField.point_mass(GRID, 3),
                             CouplingKind.mollified(0.2))
        np.testing.assert_allclose(solution.m.masses(), 1.0, atol=1e-10)

    def test_parameter_checks(self):
        with pytest.raises(ParameterError):
            solve_mfg(build_problem("default"), 0.0, M0, CouplingKind.local(), relaxation=0.0)
        with pytest.raises(ParameterError):
            solve_mfg(build_problem("default"), 0.0, M0, CouplingKind.local(), tol=0.0)

    def test_divergence_reports_history(self):
        with pytest.raises(DivergenceError) as excinfo:
            solve_mfg(build_problem("strong"), 0.0, M0, CouplingKind.local(), tol=1e-14, max_iters=2)
        assert len(excinfo.value.residual_history) == 2

    def test_feedback_is_bounded(self, local_solution):
        feedback = local_solution.feedback()
        assert feedback.shape == (local_solution.time.steps, 1, 32)
        assert np.max(np.abs(feedback)) < 1.0

    def test_manufactured_solution_converges(self):
        spec = build_problem("identity")
        errors = []
        for points in (32, 64):
            grid = TorusGrid(1, points)
            steps = default_steps(grid, 1.0)
            time = TimeGrid(0.0, 1.0, steps)
            sources = manufactured_sources(spec, grid, time, CouplingKind.local())
            solution = solve_mfg(spec, 0.0, cosine_density(grid, 0.3), CouplingKind.local(),
                                 tol=1e-11, steps=steps, sources=sources)
            errors.append(max(np.max(np.abs(solution.u.values - sources.u_exact)),
                              np.max(np.abs(solution.m.values - sources.m_exact))))
        assert errors[1] < errors[0] / 1.5


class TestDiagnostics:
    def test_unique_fixed_point(self):
        assert uniqueness_probe(build_problem("default"), 0.0, M0, CouplingKind.local(), tol=1e-11) < 1e-8

    def test_flow_restart_consistency(self, local_solution):
        assert flow_consistency_gap(local_solution, 0.5, tol=1e-10) < 1e-7

    def test_lipschitz_in_measure_is_finite(self):
        value = measure_lipschitz_probe(build_problem("default"), GRID, CouplingKind.mollified(0.2), pairs=2)
        assert 0.0 < value < 100.0

    def test_regularity_diagnostics(self, local_solution):
        stats = regularity_diagnostics(local_solution)
        assert set(stats) == {"m_holder", "du_sup", "u_sup", "residual"}
        assert stats["u_sup"] > 0

    def test_perturbation_is_normalized(self):
        rho = smooth_perturbation(GRID, seed=4)
        assert abs(rho.values.sum()) < 1e-12
        assert rho.sup_norm() == pytest.approx(1.0)


class TestLinearized:
    def test_first_order_boundary_data(self, mollified_solution):
        rho0 = smooth_perturbation(GRID, seed=1)
        first = solve_linearized_first(mollified_solution, rho0, tol=1e-11)
        np.testing.assert_array_equal(first.z.values[-1], 0.0)
        np.testing.assert_array_equal(first.rho.values[0], rho0.values)
        np.testing.assert_allclose(first.masses(), 0.0, atol=1e-12)

    def test_zero_perturbation_short_circuits(self, mollified_solution):
        first = solve_linearized_first(mollified_solution, ScalarField(GRID, np.zeros(32)))
        assert first.iterations == 0
        second = solve_linearized_second(mollified_solution, first)
        np.testing.assert_array_equal(second.z.values, 0.0)

    def test_energy_identity(self, mollified_solution):
        for seed in range(3):
            first = solve_linearized_first(mollified_solution, smooth_perturbation(GRID, seed), tol=1e-11)
            assert abs(energy_identity_probe(mollified_solution, first)) < 1e-6

    def test_second_order_starts_from_zero(self, mollified_solution):
        first = solve_linearized_first(mollified_solution, smooth_perturbation(GRID, 2), tol=1e-11)
        second = solve_linearized_second(mollified_solution, first, tol=1e-11)
        np.testing.assert_array_equal(second.rho.values[0], 0.0)
        np.testing.assert_array_equal(second.z.values[-1], 0.0)

    def test_derivative_matches_finite_differences(self):
        check = derivative_check(build_problem("default"), 0.0, M0, smooth_perturbation(GRID, 0),
                                 CouplingKind.mollified(0.2), s_values=(1e-1, 1e-2, 1e-3), tol=1e-11)
        assert all(5.0 <= r <= 20.0 for r in check.ratios)

    def test_steps_must_keep_density_positive(self):
        with pytest.raises(ParameterError):
            derivative_check(build_problem("default"), 0.0, M0, smooth_perturbation(GRID, 0),
                             CouplingKind.mollified(0.2), s_values=(0.6,))


class TestStability:
    def test_gap_shrinks_with_epsilon(self):
        grid = TorusGrid(1, 64)
        m0 = cosine_density(grid, 0.5)
        spec = build_problem("default")
        coarse = stability_gap(spec, 0.0, m0, 0.2, tol=1e-10)
        fine = stability_gap(spec, 0.0, m0, 0.05, tol=1e-10, steps=default_steps(grid, 1.0))
        assert fine.sup_u_gap < coarse.sup_u_gap
        assert fine.m_gap_L2 < coarse.m_gap_L2
        assert set(coarse.to_dict()) >= {"sup_u_gap", "grad_gap_L2", "m_gap_L2", "epsilon", "duality_pairing"}

    def test_grid_scale_mollifier_reproduces_local_solution(self):
        tol = 1e-10
        report = stability_gap(build_problem("default"), 0.0, M0, GRID.spacing, tol=tol)
        assert report.sup_u_gap <= 10 * tol
        assert report.m_gap_L2 <= 10 * tol
