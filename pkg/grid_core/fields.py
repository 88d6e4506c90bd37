"""
Discrete Fields Module
Immutable scalar and vector fields on a TorusGrid, optionally time dependent
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from grid_core.grids import TimeGrid, TorusGrid
from utils.errors import GridError, NonFiniteFieldError


def _frozen_copy(values, expected_shape, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != tuple(expected_shape):
        raise GridError(f"{what} has shape {arr.shape}, expected {tuple(expected_shape)}")
    bad = ~np.isfinite(arr)
    if bad.any():
        raise NonFiniteFieldError(tuple(np.argwhere(bad)[0]), what)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """
    Scalar values on the grid nodes

    Spatial fields have shape grid.shape; time-dependent fields carry a
    leading axis of length K+1 indexed by time node.
    """
    grid: TorusGrid
    values: np.ndarray
    time: Optional[TimeGrid] = None

    def __post_init__(self):
        expected = self.grid.shape if self.time is None else (self.time.node_count,) + self.grid.shape
        object.__setattr__(self, "values", _frozen_copy(self.values, expected, "scalar field"))

    @property
    def is_time_dependent(self) -> bool:
        return self.time is not None

    def slice(self, k: int) -> "ScalarField":
        """Spatial field at time node k"""
        if self.time is None:
            raise GridError("Field has no time axis")
        return ScalarField(self.grid, self.values[k])

    def at_time(self, t: float) -> "ScalarField":
        """Spatial field linearly interpolated in time"""
        if self.time is None:
            return self
        k, theta = self.time.locate(t)
        if theta == 0.0:
            return ScalarField(self.grid, self.values[k])
        return ScalarField(self.grid, (1.0 - theta) * self.values[k] + theta * self.values[k + 1])

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.time)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        """Cell-volume weighted sum (per time node for time-dependent fields)"""
        if self.time is None:
            return float(self.values.sum() * self.grid.cell_volume)
        axes = tuple(range(1, self.values.ndim))
        return self.values.sum(axis=axes) * self.grid.cell_volume


@dataclass(frozen=True)
class VectorField:
    """
    d-component vector values on the grid nodes

    Component axis comes right after the optional time axis:
    (d, *shape) or (K+1, d, *shape).
    """
    grid: TorusGrid
    values: np.ndarray
    time: Optional[TimeGrid] = None

    def __post_init__(self):
        spatial = (self.grid.dim,) + self.grid.shape
        expected = spatial if self.time is None else (self.time.node_count,) + spatial
        object.__setattr__(self, "values", _frozen_copy(self.values, expected, "vector field"))

    @property
    def is_time_dependent(self) -> bool:
        return self.time is not None

    def component(self, axis: int) -> ScalarField:
        if self.time is None:
            return ScalarField(self.grid, self.values[axis])
        return ScalarField(self.grid, self.values[:, axis], self.time)

    def slice(self, k: int) -> "VectorField":
        if self.time is None:
            raise GridError("Field has no time axis")
        return VectorField(self.grid, self.values[k])

    def sup_norm(self) -> float:
        """Largest Euclidean length over all nodes"""
        axis = 0 if self.time is None else 1
        return float(np.max(np.sqrt(np.sum(self.values ** 2, axis=axis))))

    def component_sup(self) -> np.ndarray:
        """Largest absolute value of each component"""
        if self.time is None:
            return np.max(np.abs(self.values.reshape(self.grid.dim, -1)), axis=1)
        moved = np.moveaxis(self.values, 1, 0)
        return np.max(np.abs(moved.reshape(self.grid.dim, -1)), axis=1)


def constant_vector_field(grid: TorusGrid, vector, time: Optional[TimeGrid] = None) -> VectorField:
    """Spatially constant vector field (drift b = const)"""
    vec = np.asarray(vector, dtype=np.float64).reshape((grid.dim,) + (1,) * grid.dim)
    values = np.broadcast_to(vec, (grid.dim,) + grid.shape)
    if time is not None:
        values = np.broadcast_to(values, (time.node_count, grid.dim) + grid.shape)
    return VectorField(grid, values, time)
