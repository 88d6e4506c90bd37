"""
Grid Definitions Module
Uniform periodic space grids on the unit torus and uniform time grids
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from utils.errors import GridError, OutOfRangeError


@dataclass(frozen=True)
class TorusGrid:
    """
    Uniform grid on the unit torus with M points per axis

    Node j on an axis sits at x = j/M. The tensor grid used by the Nash
    solver is a TorusGrid with one axis per player.
    """
    dim: int
    points_per_axis: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise GridError(f"Grid dimension must be a positive integer, got {self.dim}")
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 8:
            raise GridError(f"Need at least 8 points per axis, got {self.points_per_axis}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def node_count(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def axes(self) -> Tuple[int, ...]:
        return tuple(range(self.dim))

    @cached_property
    def coordinates(self) -> np.ndarray:
        """1-D node coordinates j/M shared by every axis"""
        coords = np.arange(self.points_per_axis) / self.points_per_axis
        coords.setflags(write=False)
        return coords

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates with shape (*shape, dim)"""
        mesh = np.meshgrid(*([self.coordinates] * self.dim), indexing="ij")
        pts = np.stack(mesh, axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def offsets(self) -> np.ndarray:
        """Node coordinates wrapped to [-1/2, 1/2), shape (*shape, dim)"""
        centered = np.where(
            np.arange(self.points_per_axis) < (self.points_per_axis + 1) // 2,
            np.arange(self.points_per_axis),
            np.arange(self.points_per_axis) - self.points_per_axis,
        ) / self.points_per_axis
        mesh = np.meshgrid(*([centered] * self.dim), indexing="ij")
        off = np.stack(mesh, axis=-1)
        off.setflags(write=False)
        return off

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the negative discrete Laplacian in rfftn layout"""
        m = self.points_per_axis
        h2 = self.spacing ** 2
        full = 4.0 * np.sin(np.pi * np.arange(m) / m) ** 2 / h2
        half = full[: m // 2 + 1]
        symbol = np.zeros([m] * (self.dim - 1) + [m // 2 + 1])
        for axis in range(self.dim):
            values = half if axis == self.dim - 1 else full
            shape = [1] * self.dim
            shape[axis] = values.size
            symbol = symbol + values.reshape(shape)
        symbol.setflags(write=False)
        return symbol

    def matches(self, other: "TorusGrid") -> bool:
        return self.dim == other.dim and self.points_per_axis == other.points_per_axis

    def require_match(self, other: "TorusGrid", what: str = "field"):
        if not self.matches(other):
            raise GridError(
                f"{what} lives on a {other.dim}-d grid with M={other.points_per_axis}, "
                f"expected {self.dim}-d with M={self.points_per_axis}"
            )

    def nearest_index(self, points: np.ndarray) -> np.ndarray:
        """Integer index of the nearest node for points of shape (..., dim)"""
        idx = np.rint(np.asarray(points) * self.points_per_axis).astype(np.int64)
        return np.mod(idx, self.points_per_axis)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t0 = t_0 < ... < t_K = T"""
    t0: float
    horizon_T: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.t0) or not np.isfinite(self.horizon_T):
            raise GridError("Time grid bounds must be finite")
        if not self.horizon_T > self.t0:
            raise GridError(f"Horizon {self.horizon_T} must exceed t0 {self.t0}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise GridError(f"Time grid needs at least one step, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.horizon_T - self.t0) / self.steps

    @property
    def node_count(self) -> int:
        return self.steps + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.steps + 1)
        t[-1] = self.horizon_T
        t.setflags(write=False)
        return t

    def node(self, k: int) -> float:
        return float(self.nodes[k])

    def locate(self, t: float) -> Tuple[int, float]:
        """
        Find the interval holding time t

        Returns:
            (k, theta) with t = (1-theta) t_k + theta t_{k+1}; k = K-1, theta = 1 at T

        Raises:
            OutOfRangeError: t outside [t0, T]
        """
        tol = 1e-12 * max(1.0, abs(self.horizon_T))
        if t < self.t0 - tol or t > self.horizon_T + tol:
            raise OutOfRangeError(f"Time {t} outside [{self.t0}, {self.horizon_T}]")
        s = (min(max(t, self.t0), self.horizon_T) - self.t0) / self.dt
        k = min(int(np.floor(s)), self.steps - 1)
        return k, float(s - k)

    def nearest_node(self, t: float) -> int:
        k, theta = self.locate(t)
        return k + 1 if theta >= 0.5 else k

    def restart(self, t: float) -> "TimeGrid":
        """Grid on [t, T] with the same step size (rounded to whole steps)"""
        steps = max(1, int(round((self.horizon_T - t) / self.dt)))
        return TimeGrid(t, self.horizon_T, steps)
