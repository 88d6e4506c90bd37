"""
Discrete Norm Probes Module
Hoelder-norm and negative-order dual-norm surrogates.

Both probes are lower bounds of the analytic norms over finite sets of node
pairs or test functions; they are deterministic and monotone in the set size.
"""
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from grid_core.fields import ScalarField
from grid_core.grids import TorusGrid
from utils.errors import ConfigurationError, GridError, ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

ALL_PAIRS_LIMIT = 4096


def _axis_offsets(m: int, per_axis: int) -> List[int]:
    """Offsets 0..M-1 on one axis, thinned to about `per_axis` entries"""
    if per_axis >= m:
        return list(range(m))
    near = max(per_axis // 2, 1)
    stride = 1
    while m // stride > per_axis - near:
        stride *= 2
    return sorted(set(range(near)) | set(range(0, m, stride)))


def pair_offsets(grid: TorusGrid, budget: int = ALL_PAIRS_LIMIT) -> np.ndarray:
    """
    Integer offset vectors o defining the sampled pairs (x, x + o h)

    All offsets (hence all node pairs) when M^d <= budget; otherwise a nested
    set of small offsets plus a power-of-two strided sub-lattice.
    """
    if grid.node_count <= budget:
        per_axis = grid.points_per_axis
    else:
        per_axis = max(2, int(np.floor(budget ** (1.0 / grid.dim))))
    axis = _axis_offsets(grid.points_per_axis, per_axis)
    offs = np.array(list(itertools.product(axis, repeat=grid.dim)), dtype=np.int64)
    return offs[np.any(offs != 0, axis=1)]


def _offset_distance(offsets: np.ndarray, m: int) -> np.ndarray:
    wrapped = np.minimum(offsets, m - offsets) / m
    return np.sqrt(np.sum(wrapped.astype(np.float64) ** 2, axis=1))


def holder_seminorm(values: np.ndarray, grid: TorusGrid, alpha: float,
                    budget: int = ALL_PAIRS_LIMIT) -> float:
    """Largest |f(x) - f(y)| / dist(x, y)^alpha over the sampled pairs, alpha in (0, 1]"""
    offsets = pair_offsets(grid, budget)
    dist = _offset_distance(offsets, grid.points_per_axis) ** alpha
    best = 0.0
    axes = tuple(range(grid.dim))
    for o, r in zip(offsets, dist):
        diff = np.max(np.abs(values - np.roll(values, tuple(o), axis=axes)))
        best = max(best, float(diff / r))
    return best


def holder_norm_probe(f: ScalarField, alpha: float, budget: int = ALL_PAIRS_LIMIT) -> float:
    """
    Discrete C^alpha norm: sup |f| plus the sampled Hoelder seminorm

    Args:
        f: Spatial scalar field
        alpha: Hoelder exponent in (0, 1)
        budget: Node count up to which every pair is examined

    Returns:
        max|f| + max over sampled pairs of |f(x)-f(y)| / dist(x,y)^alpha

    Raises:
        ParameterError: alpha outside (0, 1)
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"Hoelder exponent must lie in (0, 1), got {alpha}")
    if f.is_time_dependent:
        raise GridError("holder_norm_probe expects a spatial field")
    return float(np.max(np.abs(f.values))) + holder_seminorm(f.values, f.grid, alpha, budget)


@dataclass(frozen=True)
class TrigDictionary:
    """Plane waves cos/sin(2 pi n.x) with 0 < |n|_inf <= max_frequency (half space)"""
    max_frequency: int = 8
    include_constant: bool = True

    def frequencies(self, dim: int) -> List[Tuple[int, ...]]:
        out = []
        rng = range(-self.max_frequency, self.max_frequency + 1)
        for n in itertools.product(rng, repeat=dim):
            nz = [c for c in n if c != 0]
            if nz and nz[0] > 0:
                out.append(tuple(n))
        return out

    def size(self, dim: int) -> int:
        return 2 * len(self.frequencies(dim)) + (1 if self.include_constant else 0)


@lru_cache(maxsize=256)
def _mode_seminorm(dim: int, m: int, n: Tuple[int, ...], alpha: float, sine: bool) -> float:
    grid = TorusGrid(dim, m)
    phase = 2.0 * np.pi * np.tensordot(grid.points, np.array(n, dtype=np.float64), axes=([-1], [0]))
    wave = np.sin(phase) if sine else np.cos(phase)
    return holder_seminorm(wave, grid, alpha)


def trig_norm(grid: TorusGrid, n: Tuple[int, ...], k: int, alpha: float, sine: bool = False) -> float:
    """
    C^{k+alpha} norm of cos (or sin) of 2 pi n.x

    sum_{j<=k} omega^j + omega^k [wave]_alpha with omega = 2 pi |n|; the
    k-th derivative is a phase-shifted copy of the wave scaled by omega^k.
    """
    omega = 2.0 * np.pi * float(np.sqrt(np.sum(np.square(n))))
    shifted = sine if k % 2 == 0 else not sine
    return sum(omega ** j for j in range(k + 1)) + omega ** k * _mode_seminorm(
        grid.dim, grid.points_per_axis, tuple(n), float(alpha), shifted)


def dual_norm_probe(rho: ScalarField, k: int, alpha: float,
                    dictionary: TrigDictionary = TrigDictionary()) -> float:
    """
    Lower bound of the C^{-(k+alpha)} dual norm

    Args:
        rho: Spatial field read as the distribution u -> sum(rho u) h^d
        k: Derivative order 1..4
        alpha: Hoelder exponent in (0, 1)
        dictionary: Test-function family; larger families give larger values

    Returns:
        max over dictionary functions u of |<rho, u>| / ||u||_{k+alpha}

    Raises:
        ConfigurationError: empty dictionary
        ParameterError: k or alpha out of range
    """
    if k not in (1, 2, 3, 4):
        raise ParameterError(f"Derivative order must be 1..4, got {k}")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"Hoelder exponent must lie in (0, 1), got {alpha}")
    grid = rho.grid
    if dictionary.size(grid.dim) == 0:
        raise ConfigurationError("Dual-norm dictionary is empty")

    vol = grid.cell_volume
    best = abs(float(rho.values.sum() * vol)) if dictionary.include_constant else 0.0
    for n in dictionary.frequencies(grid.dim):
        phase = 2.0 * np.pi * np.tensordot(grid.points, np.array(n, dtype=np.float64), axes=([-1], [0]))
        c = abs(float(np.sum(rho.values * np.cos(phase)) * vol))
        s = abs(float(np.sum(rho.values * np.sin(phase)) * vol))
        best = max(best, c / trig_norm(grid, n, k, alpha), s / trig_norm(grid, n, k, alpha, sine=True))
    return best
