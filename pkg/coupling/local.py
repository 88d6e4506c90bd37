"""
Local Coupling Module
Local couplings F(x, m) with their m-derivatives, the terminal cost G, and
the grid operator applying F nodewise to a density.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from grid_core.grids import TorusGrid
from utils.errors import ParameterError

CouplingFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LocalCoupling:
    """
    F(x, m), dF/dm, d2F/dm2 for m >= 0, monotonicity constant delta and terminal G(x)

    x has shape (..., d), m has shape (...).
    """
    name: str
    value: CouplingFn
    dm: CouplingFn
    dmm: CouplingFn
    delta: float
    terminal: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.delta < 0:
            raise ParameterError(f"Monotonicity constant must be non-negative, got {self.delta}")

    def terminal_values(self, grid: TorusGrid) -> np.ndarray:
        return np.asarray(self.terminal(grid.points), dtype=np.float64) * np.ones(grid.shape)


def affine_coupling(amplitude: float = 0.5, quadratic: float = 0.0,
                    terminal_amplitude: float = 0.2, slope: float = 1.0) -> LocalCoupling:
    """
    F(x, m) = slope*m + quadratic*m^2 + amplitude*sin(2 pi x_1), G(x) = terminal_amplitude*cos(2 pi x_1)

    dF/dm = slope + 2*quadratic*m >= slope on m >= 0 when quadratic >= 0.
    """
    if quadratic < 0:
        raise ParameterError("Quadratic coefficient must be non-negative to keep F increasing")

    def value(x, m):
        x = np.asarray(x, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        out = slope * m + quadratic * m * m
        if amplitude:
            out = out + amplitude * np.sin(2.0 * np.pi * x[..., 0])
        return out

    def dm(x, m):
        m = np.asarray(m, dtype=np.float64)
        return slope + 2.0 * quadratic * m

    def dmm(x, m):
        m = np.asarray(m, dtype=np.float64)
        return np.full(m.shape, 2.0 * quadratic)

    def terminal(x):
        x = np.asarray(x, dtype=np.float64)
        return terminal_amplitude * np.cos(2.0 * np.pi * x[..., 0])

    return LocalCoupling(
        name=f"affine(a={amplitude},q={quadratic},g={terminal_amplitude},s={slope})",
        value=value,
        dm=dm,
        dmm=dmm,
        delta=slope,
        terminal=terminal,
    )


class LocalCouplingOperator:
    """Applies a local coupling nodewise on a grid"""

    def __init__(self, base: LocalCoupling, grid: TorusGrid):
        self.base = base
        self.grid = grid

    @property
    def label(self) -> str:
        return "local"

    @cached_property
    def _points(self) -> np.ndarray:
        return self.grid.points

    def evaluate(self, m: np.ndarray) -> np.ndarray:
        """F(x, m(x)) at every node"""
        return np.broadcast_to(self.base.value(self._points, m), m.shape).copy()

    def first_variation(self, m: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """dF/dm(x, m(x)) rho(x)"""
        return self.base.dm(self._points, m) * rho

    def second_variation(self, m: np.ndarray, rho: np.ndarray, rho2: np.ndarray) -> np.ndarray:
        """d2F/dm2(x, m(x)) rho(x) rho2(x)"""
        return self.base.dmm(self._points, m) * rho * rho2
