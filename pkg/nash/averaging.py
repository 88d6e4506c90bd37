"""
Averaged Values Module
w^{N,i}(t0, x_i, m0) = integral of v^{N,i}(t0, x) against m0 in every other
coordinate, and the gaps between the Nash values, their master projections
and the local MFG limit.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from coupling.problem import CouplingKind, ProblemSpec
from grid_core.fields import ScalarField
from grid_core.grids import TorusGrid
from measures.densities import DensityField
from mfg.solver import solve_mfg
from nash.projection import MasterProjector
from nash.solver import NashSolution, solve_nash
from utils.errors import ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

QUADRATURE_LIMIT_BITS = 20


@dataclass(frozen=True)
class AveragedValue:
    values: ScalarField
    stderr: ScalarField
    method: str
    samples: int = 0


def _quadrature(block: np.ndarray, i: int, weights: np.ndarray) -> np.ndarray:
    out = np.moveaxis(block, i, 0)
    while out.ndim > 1:
        out = np.tensordot(out, weights, axes=([out.ndim - 1], [0]))
    return out


def average_value(v: NashSolution, i: int, t0: float, m0: DensityField, mc_samples: int = 10_000,
                  seed: int = 0, method: str = "auto") -> AveragedValue:
    """
    Average of v^{N,i}(t0, .) over x_j ~ m0 for j != i

    Tensor quadrature with the node masses of m0 when (N-1) log2(M) <= 20,
    Monte Carlo over node indices otherwise (or when method="monte_carlo").

    Returns:
        AveragedValue with one value and standard error per node x_i
    """
    if mc_samples < 1:
        raise ParameterError("mc_samples must be at least 1")
    v.grid.require_match(m0.grid, "m0")
    n, m = v.n_players, v.grid.points_per_axis
    block = v.player_values(i, t0)
    weights = m0.node_masses()
    if method == "auto":
        method = "quadrature" if (n - 1) * np.log2(m) <= QUADRATURE_LIMIT_BITS else "monte_carlo"

    if method == "quadrature":
        values = _quadrature(block, i, weights)
        zero = ScalarField(v.grid, np.zeros(m))
        return AveragedValue(ScalarField(v.grid, values), zero, method)
    if method != "monte_carlo":
        raise ParameterError(f"Unknown averaging method '{method}'")

    rng = np.random.default_rng(seed)
    draws = rng.choice(m, size=(mc_samples, n - 1), p=weights)
    moved = np.moveaxis(block, i, 0)
    samples = moved[(slice(None),) + tuple(draws.T)]
    mean = samples.mean(axis=1)
    stderr = samples.std(axis=1, ddof=1) / np.sqrt(mc_samples) if mc_samples > 1 else np.zeros(m)
    return AveragedValue(ScalarField(v.grid, mean), ScalarField(v.grid, stderr), method, mc_samples)


@dataclass(frozen=True)
class NashGap:
    sup_gap: float
    avg_gap: float
    n_players: int
    epsilon: float
    samples: int

    def as_tuple(self) -> Tuple[float, float]:
        return self.sup_gap, self.avg_gap


def nash_gap(spec: ProblemSpec, N: int, epsilon: float, t0: float, m0: DensityField,
             grid: Optional[TorusGrid] = None, samples: int = 16, seed: int = 0,
             steps: Optional[int] = None, projector: Optional[MasterProjector] = None,
             solution: Optional[NashSolution] = None) -> NashGap:
    """
    sup_gap: max over sampled tensor nodes and players of |v^{N,i} - u^{N,i}| at t0
    avg_gap: sup over x of |w^{N,0}(t0, x, m0) - u(t0, x)| with u the local MFG value

    Args:
        grid: One-dimensional player grid (m0.grid by default)
        samples: Tensor nodes drawn for the sup gap
    """
    grid = grid or m0.grid
    solution = solution or solve_nash(spec, N, epsilon, grid, t0, steps)
    projector = projector or MasterProjector(spec, epsilon, grid)
    rng = np.random.default_rng(seed)
    m = grid.points_per_axis
    coords = grid.coordinates

    sup_gap = 0.0
    block = solution.slice_at(t0)
    for _ in range(samples):
        idx = rng.integers(m, size=N)
        for i in range(N):
            u = projector.evaluate(i, t0, coords[idx])
            sup_gap = max(sup_gap, abs(float(block[i][tuple(idx)]) - u))

    averaged = average_value(solution, 0, t0, m0, seed=seed)
    local = solve_mfg(spec, t0, m0, CouplingKind.local(), steps=None)
    avg_gap = float(np.max(np.abs(averaged.values.values - local.u.values[0])))
    logger.info(f"nash_gap N={N} eps={epsilon:g}: sup_gap={sup_gap:.3e} avg_gap={avg_gap:.3e}")
    return NashGap(sup_gap, avg_gap, N, float(epsilon), samples)
