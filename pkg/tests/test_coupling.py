import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupling.hamiltonian import HamiltonianSpec, relativistic_hamiltonian
from coupling.local import LocalCouplingOperator, affine_coupling
from coupling.mollifier import (
    MollifiedCoupling,
    Mollifier,
    empirical_coupling_table,
    mollified_eval,
    mollified_eval_empirical,
    monotonicity_probe,
)
from coupling.probes import assumption_report, check_hamiltonian, closeness_probe, regularity_probe
from coupling.problem import CouplingKind, CouplingProfile, build_problem, load_problem, problem_from_dict
from grid_core.grids import TorusGrid
from measures.densities import DensityField, cosine_density
from measures.empirical import EmpiricalMeasure
from utils.errors import ConfigurationError, ParameterError


class TestHamiltonian:
    def test_gradient_matches_finite_differences(self):
        ham = relativistic_hamiltonian(0.1)
        x = np.array([[0.3, 0.1]])
        p = np.array([[0.7, -1.2]])
        step = 1e-6
        fd = [(ham.value(x, p + step * e) - ham.value(x, p - step * e))[0] / (2 * step) for e in np.eye(2)]
        np.testing.assert_allclose(ham.gradient_p(x, p)[0], fd, atol=1e-8)

    def test_third_contraction_matches_hessian_differences(self):
        ham = relativistic_hamiltonian(0.0)
        x = np.zeros((1, 2))
        p = np.array([[0.4, 0.9]])
        q = np.array([[-0.5, 1.5]])
        step = 1e-5
        dh = (ham.hessian_p(x, p + step * q) - ham.hessian_p(x, p - step * q)) / (2 * step)
        expected = dh[0] @ q[0]
        np.testing.assert_allclose(ham.third_contract(x, p, q)[0], expected, atol=1e-7)

    def test_assumptions_hold(self):
        check = check_hamiltonian(relativistic_hamiltonian(0.1), dim=2, samples=500)
        assert check.passed
        assert check.max_gradient_norm < 1.0
        assert check.fd_order == pytest.approx(2.0, abs=0.2)

    def test_quadratic_hamiltonian_is_not_lipschitz(self):
        quadratic = HamiltonianSpec(
            name="quadratic",
            value=lambda x, p: 0.5 * np.sum(p * p, axis=-1),
            gradient_p=lambda x, p: np.asarray(p, dtype=float),
            hessian_p=lambda x, p: np.broadcast_to(np.eye(p.shape[-1]), p.shape + (p.shape[-1],)),
            third_contract=lambda x, p, q: np.zeros_like(p),
            lipschitz_bound=1.0,
        )
        assert not check_hamiltonian(quadratic, samples=200).passed


class TestLocalCoupling:
    def test_rejects_decreasing_coupling(self):
        with pytest.raises(ParameterError):
            affine_coupling(quadratic=-0.1)

    def test_nodewise_operator(self, grid32):
        coupling = affine_coupling(amplitude=0.0, quadratic=0.5, slope=2.0)
        op = LocalCouplingOperator(coupling, grid32)
        m = np.full(32, 2.0)
        np.testing.assert_allclose(op.evaluate(m), 2 * 2 + 0.5 * 4)
        np.testing.assert_allclose(op.first_variation(m, np.ones(32)), 2 + 2 * 0.5 * 2)
        np.testing.assert_allclose(op.second_variation(m, np.ones(32), 2 * np.ones(32)), 2.0)


class TestMollifier:
    def test_unit_integral_and_symmetry(self, grid64):
        moll = Mollifier(grid64, 0.2)
        assert moll.samples.sum() * grid64.cell_volume == pytest.approx(1.0, abs=1e-13)
        np.testing.assert_allclose(moll.samples, np.roll(moll.samples[::-1], 1), atol=1e-14)

    def test_convolution_methods_agree(self, grid64):
        moll = Mollifier(grid64, 0.3)
        values = np.random.default_rng(4).standard_normal(64)
        np.testing.assert_allclose(moll.convolve(values, "fft"), moll.convolve(values, "direct"), atol=1e-12)
        np.testing.assert_allclose(moll.convolve(np.ones(64)), 1.0, atol=1e-12)

    def test_rejects_unknown_profile(self, grid32):
        with pytest.raises(ConfigurationError):
            Mollifier(grid32, 0.2, "gaussian")
        with pytest.raises(ParameterError):
            Mollifier(grid32, 0.0)

    def test_identity_coupling_keeps_uniform(self, grid64):
        spec = build_problem("identity")
        fc = spec.mollified(grid64, 0.2)
        out = mollified_eval(fc, DensityField.uniform(grid64))
        np.testing.assert_allclose(out.values, 1.0, atol=1e-12)

    def test_first_variation_is_directional_derivative(self, grid64):
        spec = build_problem("quadratic")
        fc = spec.mollified(grid64, 0.2)
        m = cosine_density(grid64, 0.4).values
        rho = np.sin(2 * np.pi * grid64.coordinates)
        step = 1e-6
        fd = (fc.evaluate(m + step * rho) - fc.evaluate(m - step * rho)) / (2 * step)
        np.testing.assert_allclose(fc.first_variation(m, rho), fd, atol=1e-7)

    def test_empirical_evaluation_matches_table(self, grid32):
        fc = build_problem("default").mollified(grid32, 0.25)
        idx = np.array([3, 10, 10])
        atoms = EmpiricalMeasure(grid32.coordinates[idx][:, None])
        table = empirical_coupling_table(fc, idx[None, :])
        direct = mollified_eval_empirical(fc, atoms, grid32.coordinates[5])
        assert direct.value == pytest.approx(table[0, 5], rel=1e-10, abs=1e-12)
        assert not direct.under_resolved

    def test_table_is_permutation_invariant(self, grid32):
        fc = build_problem("default").mollified(grid32, 0.25)
        table = empirical_coupling_table(fc, np.array([[1, 7, 20], [20, 1, 7]]))
        np.testing.assert_allclose(table[0], table[1], atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 0.9), st.integers(1, 6), st.floats(0, 6.28),
           st.floats(0.05, 0.9), st.integers(1, 6), st.floats(0, 6.28), st.sampled_from([0.1, 0.2, 0.3]))
    def test_monotone_pairing(self, a1, k1, p1, a2, k2, p2, eps):
        grid = TorusGrid(1, 64)
        fc = build_problem("default").mollified(grid, eps)
        pairing = monotonicity_probe(fc, cosine_density(grid, a1, k1, p1), cosine_density(grid, a2, k2, p2))
        assert pairing >= -1e-10


class TestProbes:
    def test_closeness_shrinks_with_epsilon(self):
        grid = TorusGrid(1, 128)
        spec = build_problem("default")
        coarse = closeness_probe(spec.mollified(grid, 0.2), 5.0, 1.0, 16, seed=1)
        fine = closeness_probe(spec.mollified(grid, 0.05), 5.0, 1.0, 16, seed=1)
        assert fine < coarse

    def test_regularity_grows_as_epsilon_shrinks(self, grid64):
        spec = build_problem("default")
        assert regularity_probe(spec.mollified(grid64, 0.2), 0.5) < regularity_probe(spec.mollified(grid64, 0.1), 0.5)

    def test_assumption_report(self, grid32):
        spec = build_problem("default")
        report = assumption_report(spec.hamiltonian, spec.coupling, grid32)
        assert report["hamiltonian"]["passed"]
        assert report["coupling"]["passed"]


class TestProblem:
    @pytest.mark.parametrize("profile", [p.value for p in CouplingProfile])
    def test_every_profile_builds(self, profile, grid32):
        spec = build_problem(profile)
        assert spec.name == profile
        assert spec.operator(grid32, CouplingKind.local()).label == "local"

    def test_blocks_override_profile(self):
        spec = problem_from_dict({"profile": "default", "coupling": {"slope": 3.0},
                                  "mollifier": {"epsilon": 0.05}, "horizon": 2.0})
        assert spec.coupling.delta == 3.0
        assert spec.epsilon == 0.05
        assert spec.horizon == 2.0

    def test_unknown_blocks_rejected(self):
        with pytest.raises(ConfigurationError):
            problem_from_dict({"mollifier": {"profile": "box"}})
        with pytest.raises(ConfigurationError):
            problem_from_dict({"hamiltonian": {"profile": "quadratic"}})

    def test_load_toml(self, tmp_path):
        path = tmp_path / "problem.toml"
        path.write_text('profile = "strong"\n[terminal]\namplitude = 0.3\n')
        spec = load_problem(path)
        assert spec.name == "strong"
        np.testing.assert_allclose(spec.coupling.terminal(np.array([[0.0]])), 0.3)

    def test_mollified_kind_needs_positive_scale(self):
        with pytest.raises(ParameterError):
            CouplingKind.mollified(0.0)
        assert CouplingKind.mollified(0.1).label == "mollified(0.1)"
