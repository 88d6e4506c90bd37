"""
Atom Projection Module
Kernel density projection of empirical measures onto a grid
"""
import math
from typing import Optional

import numpy as np

from coupling.mollifier import PROFILES
from grid_core.fields import ScalarField
from grid_core.grids import TorusGrid
from measures.densities import DensityField
from measures.empirical import EmpiricalMeasure
from utils.errors import GridError, ResolutionError


def default_bandwidth(grid: TorusGrid, epsilon: Optional[float] = None) -> float:
    """max(2h, eps/2): projection error stays below the mollification scale"""
    base = 2.0 * grid.spacing
    return base if epsilon is None else max(base, 0.5 * float(epsilon))


def project_to_grid(em: EmpiricalMeasure, grid: TorusGrid, bandwidth: Optional[float] = None,
                    epsilon: Optional[float] = None, profile: str = "bump") -> DensityField:
    """
    Smooth an empirical measure into a grid density

    Each atom x = (q + f) h, q integer, f in [0,1)^d, spreads its weight over
    the nodes q + o with kernel values K((o - f) h / bandwidth), normalized
    per atom. A grid-aligned shift of the atoms therefore shifts the result
    exactly.

    Args:
        em: Empirical measure
        grid: Target grid
        bandwidth: Kernel radius; defaults to default_bandwidth(grid, epsilon)
        epsilon: Mollification scale used for the default bandwidth

    Returns:
        Unit-mass density

    Raises:
        ResolutionError: bandwidth below the grid spacing
    """
    if em.dim != grid.dim:
        raise GridError(f"Atoms are {em.dim}-d, grid is {grid.dim}-d")
    h = grid.spacing
    if bandwidth is None:
        bandwidth = default_bandwidth(grid, epsilon)
    if bandwidth < h * (1.0 - 1e-12):
        raise ResolutionError(f"Projection bandwidth {bandwidth:.3e} is below the grid spacing {h:.3e}")

    m = grid.points_per_axis
    scaled = em.atoms * m
    base = np.floor(scaled)
    frac = scaled - base
    base = np.mod(base.astype(np.int64), m)

    reach = int(math.ceil(bandwidth / h)) + 1
    axis = np.arange(-reach, reach + 1)
    window = np.array(np.meshgrid(*([axis] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T

    disp = (window[None, :, :] - frac[:, None, :]) * (h / bandwidth)
    weights = PROFILES[profile](np.sum(disp * disp, axis=-1))
    weights = weights / weights.sum(axis=1, keepdims=True)

    nodes = np.mod(base[:, None, :] + window[None, :, :], m).reshape(-1, grid.dim)
    values = np.zeros(grid.shape)
    np.add.at(values, tuple(nodes.T), (weights * em.weight).ravel())
    return DensityField(ScalarField(grid, values / grid.cell_volume))
