"""
Discrete Operators Module
Periodic finite differences and multilinear interpolation.

Raw-array helpers act on the trailing `dim` axes so the same stencils serve
time-dependent stacks, vector components and the Nash tensor grid.
"""
import itertools
from typing import Sequence

import numpy as np

from grid_core.fields import ScalarField, VectorField
from grid_core.grids import TorusGrid
from utils.errors import GridError, NonFiniteFieldError


def forward_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - values) / h


def backward_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (values - np.roll(values, 1, axis=axis)) / h


def central_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


def second_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - 2.0 * values + np.roll(values, 1, axis=axis)) / (h * h)


def spatial_axes(values: np.ndarray, dim: int) -> Sequence[int]:
    return tuple(range(values.ndim - dim, values.ndim))


def gradient_values(values: np.ndarray, dim: int, h: float) -> np.ndarray:
    """Central-difference gradient; components inserted before the spatial axes"""
    axes = spatial_axes(values, dim)
    comps = [central_difference(values, axis, h) for axis in axes]
    return np.stack(comps, axis=values.ndim - dim)


def laplacian_values(values: np.ndarray, dim: int, h: float) -> np.ndarray:
    out = np.zeros_like(values)
    for axis in spatial_axes(values, dim):
        out += second_difference(values, axis, h)
    return out


def divergence_values(components: np.ndarray, dim: int, h: float) -> np.ndarray:
    """Centered divergence of (..., d, *shape) components"""
    comp_axis = components.ndim - dim - 1
    out = None
    for a in range(dim):
        comp = np.take(components, a, axis=comp_axis)
        term = central_difference(comp, comp.ndim - dim + a, h)
        out = term if out is None else out + term
    return out


def _require_finite(values: np.ndarray, what: str):
    bad = ~np.isfinite(values)
    if bad.any():
        raise NonFiniteFieldError(tuple(np.argwhere(bad)[0]), what)


def gradient(f: ScalarField) -> VectorField:
    """
    Periodic central-difference gradient

    Args:
        f: Spatial or time-dependent scalar field

    Returns:
        Vector field with one component per axis
    """
    _require_finite(f.values, "gradient input")
    grid = f.grid
    return VectorField(grid, gradient_values(f.values, grid.dim, grid.spacing), f.time)


def laplacian(f: ScalarField) -> ScalarField:
    _require_finite(f.values, "laplacian input")
    return ScalarField(f.grid, laplacian_values(f.values, f.grid.dim, f.grid.spacing), f.time)


def divergence(v: VectorField) -> ScalarField:
    _require_finite(v.values, "divergence input")
    return ScalarField(v.grid, divergence_values(v.values, v.grid.dim, v.grid.spacing), v.time)


def interpolate_points(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Periodic multilinear interpolation on a uniform tensor grid

    Args:
        values: Nodal values with shape (M,) * D
        points: Query points with shape (n, D); wrapped into [0, 1)

    Returns:
        Interpolated values with shape (n,)
    """
    dim = values.ndim
    m = values.shape[0]
    pts = np.asarray(points, dtype=np.float64).reshape(-1, dim)
    scaled = np.mod(pts, 1.0) * m
    base = np.floor(scaled).astype(np.int64)
    frac = scaled - base
    base = np.mod(base, m)

    out = np.zeros(pts.shape[0])
    for corner in itertools.product((0, 1), repeat=dim):
        weight = np.ones(pts.shape[0])
        index = []
        for axis, c in enumerate(corner):
            weight = weight * (frac[:, axis] if c else 1.0 - frac[:, axis])
            index.append(np.mod(base[:, axis] + c, m))
        out += weight * values[tuple(index)]
    return out


def interpolate(f: ScalarField, t: float, x) -> float:
    """
    Evaluate a field at an arbitrary time and point

    Multilinear in space, linear in time; nodal values are reproduced exactly.

    Raises:
        OutOfRangeError: t outside the field's time grid
    """
    point = np.asarray(x, dtype=np.float64).reshape(1, f.grid.dim)
    if f.time is None:
        return float(interpolate_points(f.values, point)[0])
    k, theta = f.time.locate(t)
    lower = interpolate_points(f.values[k], point)[0]
    if theta == 0.0:
        return float(lower)
    upper = interpolate_points(f.values[k + 1], point)[0]
    return float((1.0 - theta) * lower + theta * upper)


def geodesic_offsets(offsets: np.ndarray) -> np.ndarray:
    """Wrap coordinate differences into [-1/2, 1/2)"""
    return offsets - np.floor(offsets + 0.5)


def geodesic_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Torus distance between points of shape (..., d)"""
    diff = geodesic_offsets(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def check_same_grid(grid: TorusGrid, *fields):
    for f in fields:
        if not grid.matches(f.grid):
            raise GridError("Fields live on different grids")
