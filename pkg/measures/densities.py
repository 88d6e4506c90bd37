"""
Probability Densities Module
Grid densities read as cell-wise constant on [x_j - h/2, x_j + h/2)
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from grid_core.fields import ScalarField
from grid_core.grids import TimeGrid, TorusGrid
from utils.errors import InvalidDensityError

NEGATIVE_TOLERANCE = 1e-12
MASS_TOLERANCE = 1e-10


def check_density_values(values: np.ndarray, grid: TorusGrid, what: str = "density"):
    low = float(np.min(values))
    if low < -NEGATIVE_TOLERANCE:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(values)), values.shape))
        raise InvalidDensityError(f"{what} has value {low:.3e} at node {idx}")
    mass = float(values.sum() * grid.cell_volume)
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise InvalidDensityError(f"{what} has mass {mass:.12f}, expected 1")


@dataclass(frozen=True)
class DensityField:
    """Non-negative spatial field of unit mass"""
    field: ScalarField

    def __post_init__(self):
        if self.field.is_time_dependent:
            raise InvalidDensityError("A density is a spatial field; use DensityFlow for time series")
        check_density_values(self.field.values, self.field.grid)

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def node_masses(self) -> np.ndarray:
        """Mass carried by each cell, clipped at zero and summing to one"""
        masses = np.clip(self.values, 0.0, None) * self.grid.cell_volume
        return masses / masses.sum()

    @classmethod
    def from_values(cls, grid: TorusGrid, values: np.ndarray, normalize: bool = False) -> "DensityField":
        arr = np.asarray(values, dtype=np.float64)
        if normalize:
            total = arr.sum() * grid.cell_volume
            if not total > 0:
                raise InvalidDensityError("Cannot normalize a field with non-positive mass")
            arr = arr / total
        return cls(ScalarField(grid, arr))

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "DensityField":
        return cls(ScalarField(grid, np.ones(grid.shape)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "DensityField":
        """Sample fn at the nodes (points of shape (*shape, d)) and normalize"""
        return cls.from_values(grid, np.asarray(fn(grid.points)) * np.ones(grid.shape), normalize=True)

    @classmethod
    def point_mass(cls, grid: TorusGrid, index) -> "DensityField":
        """All mass in the cell of one node"""
        values = np.zeros(grid.shape)
        values[tuple(np.atleast_1d(index))] = 1.0 / grid.cell_volume
        return cls(ScalarField(grid, values))


def cosine_density(grid: TorusGrid, amplitude: float = 0.5, frequency: int = 1,
                   phase: float = 0.0) -> DensityField:
    """1 + amplitude cos(2 pi k x_1 + phase), renormalized on the grid"""
    if abs(amplitude) >= 1.0:
        raise InvalidDensityError("Cosine density needs |amplitude| < 1 to stay positive")
    return DensityField.from_function(
        grid, lambda x: 1.0 + amplitude * np.cos(2.0 * np.pi * frequency * x[..., 0] + phase)
    )


@dataclass(frozen=True)
class DensityFlow:
    """Time series of densities on a TimeGrid"""
    field: ScalarField

    def __post_init__(self):
        if not self.field.is_time_dependent:
            raise InvalidDensityError("A density flow needs a time axis")
        for k in range(self.field.time.node_count):
            check_density_values(self.field.values[k], self.field.grid, f"density at time node {k}")

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    @property
    def time(self) -> TimeGrid:
        return self.field.time

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def at(self, k: int) -> DensityField:
        return DensityField(self.field.slice(k))

    def at_time(self, t: float) -> DensityField:
        return DensityField(self.field.at_time(t))

    def masses(self) -> np.ndarray:
        return self.field.integral()

    @classmethod
    def constant(cls, density: DensityField, time: TimeGrid) -> "DensityFlow":
        values = np.broadcast_to(density.values, (time.node_count,) + density.grid.shape)
        return cls(ScalarField(density.grid, values, time))


def as_density(values: np.ndarray, grid: TorusGrid, what: Optional[str] = None) -> DensityField:
    """Wrap raw values, raising InvalidDensityError with context"""
    try:
        return DensityField(ScalarField(grid, values))
    except InvalidDensityError as e:
        raise InvalidDensityError(f"{what}: {e}" if what else str(e)) from e
