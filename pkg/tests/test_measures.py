import numpy as np
import ot
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from grid_core.grids import TorusGrid
from measures.densities import DensityField, DensityFlow, cosine_density
from measures.empirical import EmpiricalMeasure, empirical, load_atoms_csv, save_atoms_csv
from measures.projection import default_bandwidth, project_to_grid
from measures.sampling import inverse_cdf, sample
from measures.wasserstein import w1_bound, w1_circle
from utils.errors import (
    InvalidDensityError,
    ParameterError,
    ResolutionError,
    UndefinedMeasureError,
    UnsupportedDimensionError,
)

unit_points = arrays(np.float64, st.integers(2, 12), elements=st.floats(0.0, 0.999999))


class TestDensities:
    def test_cosine_density_has_unit_mass(self, grid64):
        m = cosine_density(grid64, 0.7, 3)
        assert m.mass == pytest.approx(1.0, abs=1e-12)
        assert m.node_masses().sum() == pytest.approx(1.0)

    def test_amplitude_limit(self, grid32):
        with pytest.raises(InvalidDensityError):
            cosine_density(grid32, 1.0)

    def test_negative_values_rejected(self, grid32):
        values = np.ones(32)
        values[3] = -1e-6
        values[4] += 1e-6
        with pytest.raises(InvalidDensityError):
            DensityField.from_values(grid32, values)

    def test_mass_checked_unless_normalized(self, grid32):
        with pytest.raises(InvalidDensityError):
            DensityField.from_values(grid32, 2 * np.ones(32))
        assert DensityField.from_values(grid32, 2 * np.ones(32), normalize=True).mass == pytest.approx(1.0)

    def test_point_mass(self, grid32):
        m = DensityField.point_mass(grid32, 5)
        assert m.node_masses()[5] == pytest.approx(1.0)

    def test_constant_flow(self, grid32, unit_time):
        flow = DensityFlow.constant(DensityField.uniform(grid32), unit_time)
        np.testing.assert_allclose(flow.masses(), 1.0)
        np.testing.assert_allclose(flow.at_time(0.37).values, 1.0)


class TestEmpirical:
    def test_excludes_one_point(self):
        measure = empirical([0.1, 0.2, 0.3], 1)
        assert measure.count == 2
        assert measure.weight == pytest.approx(0.5)
        np.testing.assert_allclose(measure.atoms[:, 0], [0.1, 0.3])
        assert measure.excluded_index == 1 and measure.original_count == 3

    def test_single_point_has_no_measure(self):
        with pytest.raises(UndefinedMeasureError):
            empirical([0.4], 0)
        assert empirical([0.4], None).count == 1

    def test_index_range(self):
        with pytest.raises(ParameterError):
            empirical([0.1, 0.2], 2)

    @given(unit_points, st.randoms(use_true_random=False))
    def test_multiset_ignores_order(self, points, rnd):
        shuffled = list(points)
        rnd.shuffle(shuffled)
        assert empirical(points, None).same_multiset(empirical(np.array(shuffled), None))

    def test_csv_round_trip(self, tmp_path):
        measure = empirical(np.array([[0.1, 0.2], [0.3, 0.4]]), None)
        loaded = load_atoms_csv(save_atoms_csv(measure, tmp_path / "atoms.csv"))
        np.testing.assert_array_equal(loaded.atoms, measure.atoms)


class TestProjection:
    def test_unit_mass_and_shift(self, grid64):
        atoms = (np.arange(5) * 7 + 0.3)[:, None] / 64
        base = project_to_grid(EmpiricalMeasure(atoms), grid64, bandwidth=3 / 64)
        shifted = project_to_grid(EmpiricalMeasure(atoms + 2 / 64), grid64, bandwidth=3 / 64)
        assert base.mass == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(shifted.values, np.roll(base.values, 2), atol=1e-10)

    def test_bandwidth_below_spacing(self, grid64):
        with pytest.raises(ResolutionError):
            project_to_grid(EmpiricalMeasure(np.array([[0.5]])), grid64, bandwidth=0.5 / 64)

    def test_default_bandwidth(self, grid64):
        assert default_bandwidth(grid64) == pytest.approx(2 / 64)
        assert default_bandwidth(grid64, 0.2) == pytest.approx(0.1)


class TestSampling:
    def test_moments_of_cosine_density(self, grid64):
        m = cosine_density(grid64, 0.5)
        x = sample(m, 20000, seed=11)[:, 0]
        assert np.all((x >= 0) & (x < 1))
        assert np.mean(np.cos(2 * np.pi * x)) == pytest.approx(0.25, abs=0.02)

    def test_deterministic(self, m0_32):
        np.testing.assert_array_equal(sample(m0_32, 10, seed=5), sample(m0_32, 10, seed=5))

    def test_count_must_be_positive(self, m0_32):
        with pytest.raises(ParameterError):
            sample(m0_32, 0, seed=1)

    def test_two_dimensional_uniform(self):
        grid = TorusGrid(2, 8)
        u = np.random.default_rng(2).random((500, 2))
        x = inverse_cdf(DensityField.uniform(grid), u)
        assert x.shape == (500, 2)
        assert np.all((x >= 0) & (x < 1))


class TestWasserstein:
    def test_point_masses(self):
        a = EmpiricalMeasure(np.array([[0.05]]))
        b = EmpiricalMeasure(np.array([[0.95]]))
        assert w1_circle(a, b) == pytest.approx(0.1)

    def test_uniform_against_atom(self, grid32):
        atom = EmpiricalMeasure(np.array([[0.3]]))
        assert w1_circle(DensityField.uniform(grid32), atom) == pytest.approx(0.25, abs=1e-12)

    def test_identical_densities(self, m0_32):
        assert w1_circle(m0_32, m0_32) == pytest.approx(0.0, abs=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(unit_points, unit_points)
    def test_matches_pot_on_atoms(self, u, v):
        exact = w1_circle(EmpiricalMeasure(u[:, None]), EmpiricalMeasure(v[:, None]))
        oracle = float(ot.wasserstein_circle(u[:, None], v[:, None])[0])
        assert exact == pytest.approx(oracle, abs=1e-5)

    def test_dimension_guard(self):
        grid = TorusGrid(2, 8)
        with pytest.raises(UnsupportedDimensionError):
            w1_circle(DensityField.uniform(grid), DensityField.uniform(grid))

    def test_bounds_bracket_exact_value(self, grid64):
        mu = cosine_density(grid64, 0.5)
        nu = cosine_density(grid64, 0.5, phase=1.0)
        bounds = w1_bound(mu, nu)
        exact = w1_circle(mu, nu)
        assert bounds.lower <= exact + 1e-12
        assert exact <= bounds.upper + 1e-12

    def test_bounds_in_two_dimensions(self):
        grid = TorusGrid(2, 16)
        atoms = EmpiricalMeasure(np.array([[0.25, 0.25]]))
        bounds = w1_bound(DensityField.point_mass(grid, (4, 4)), atoms)
        assert 0.0 <= bounds.lower <= bounds.upper
        assert bounds.upper <= 0.1
