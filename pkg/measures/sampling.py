"""
Density Sampling Module
Inverse-CDF sampling from cell-wise constant grid densities
"""
import numpy as np

from measures.densities import DensityField
from utils.errors import ParameterError


def _invert_rows(cdf: np.ndarray, target: np.ndarray):
    """Cell index and position inside the cell for row-wise normalized CDFs"""
    n, m = cdf.shape
    idx = np.minimum((cdf <= target[:, None]).sum(axis=1), m - 1)
    rows = np.arange(n)
    lower = np.where(idx > 0, cdf[rows, np.maximum(idx - 1, 0)], 0.0)
    width = cdf[rows, idx] - lower
    frac = np.where(width > 0, (target - lower) / np.where(width > 0, width, 1.0), 0.5)
    return idx, frac


def inverse_cdf(m: DensityField, uniforms: np.ndarray) -> np.ndarray:
    """
    Map uniforms in [0,1)^d to points distributed as m

    Axis a is drawn from its conditional law given the cells already chosen
    on axes < a; within a cell the position is uniform, matching the
    cell-wise constant reading of the density.

    Args:
        m: Grid density
        uniforms: (n, d) array of U(0,1) draws

    Returns:
        (n, d) points in [0, 1)^d
    """
    grid = m.grid
    u = np.asarray(uniforms, dtype=np.float64).reshape(-1, grid.dim)
    n = u.shape[0]
    h = grid.spacing
    masses = m.node_masses()
    cells = np.zeros((n, grid.dim), dtype=np.int64)
    points = np.empty((n, grid.dim))

    for axis in range(grid.dim):
        block = masses
        if axis < grid.dim - 1:
            block = masses.sum(axis=tuple(range(axis + 1, grid.dim)))
        if axis == 0:
            cdf = np.cumsum(block)
            cdf = cdf / cdf[-1]
            idx = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), grid.points_per_axis - 1)
            lower = np.where(idx > 0, cdf[np.maximum(idx - 1, 0)], 0.0)
            width = cdf[idx] - lower
            frac = np.where(width > 0, (u[:, 0] - lower) / np.where(width > 0, width, 1.0), 0.5)
        else:
            cond = block[tuple(cells[:, a] for a in range(axis))]
            cdf = np.cumsum(cond, axis=1)
            cdf = cdf / cdf[:, -1:]
            idx, frac = _invert_rows(cdf, u[:, axis])
        frac = np.clip(frac, 0.0, np.nextafter(1.0, 0.0))
        cells[:, axis] = idx
        points[:, axis] = np.mod((idx - 0.5 + frac) * h, 1.0)
    return points


def sample(m: DensityField, count: int, seed: int) -> np.ndarray:
    """
    Draw iid points from a grid density

    Args:
        m: Grid density
        count: Number of points (> 0)
        seed: Seed of the numpy Generator

    Returns:
        (count, d) array of points in [0, 1)^d

    Raises:
        ParameterError: count <= 0
    """
    if int(count) != count or count <= 0:
        raise ParameterError(f"Sample count must be a positive integer, got {count}")
    rng = np.random.default_rng(seed)
    return inverse_cdf(m, rng.random((int(count), m.grid.dim)))
