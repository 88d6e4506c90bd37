"""
Implicit Diffusion Module
Solves (I - dt Lap_h) w = g on the periodic grid by real FFT diagonalization
"""
import numpy as np
from scipy import fft as sp_fft

from grid_core.grids import TorusGrid


class ImplicitDiffusion:
    """
    Inverse of I - dt Lap_h with the standard (2d+1)-point Laplacian

    The inverse has non-negative entries and unit row sums, so it never
    increases the sup norm and preserves mass.
    """

    def __init__(self, grid: TorusGrid, dt: float):
        self.grid = grid
        self.dt = float(dt)
        self._symbol = 1.0 / (1.0 + self.dt * grid.laplacian_symbol)

    def solve(self, values: np.ndarray) -> np.ndarray:
        """Apply the inverse over the trailing grid axes (leading axes are batched)"""
        dim = self.grid.dim
        axes = tuple(range(values.ndim - dim, values.ndim))
        spec = sp_fft.rfftn(values, axes=axes)
        spec *= self._symbol
        return sp_fft.irfftn(spec, s=self.grid.shape, axes=axes)
