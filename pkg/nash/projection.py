"""
Master Projection Module
u^{N,i}(t, x) = U^eps(t, x_i, m^{N,i}_x), evaluated by projecting the empirical
measure onto the grid and solving the mollified MFG system from (t, density).
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from coupling.problem import CouplingKind, ProblemSpec
from grid_core.grids import TorusGrid
from grid_core.operators import interpolate_points
from measures.empirical import empirical
from measures.projection import default_bandwidth, project_to_grid
from mfg.solver import default_steps, solve_mfg
from utils.errors import ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

TIME_DECIMALS = 12


@dataclass(frozen=True)
class ProjectionValues:
    """u^{N,i} at sampled tensor nodes with the bandwidth used for the atom projection"""
    player: int
    time: float
    nodes: np.ndarray
    values: np.ndarray
    bandwidth: float


class MasterProjector:
    """
    Caching evaluator of x -> U^eps(t, ., m^{N,i}_x)

    Fields u^eps(t, .) are cached by (t, multiset of the other atoms), so
    permuting the other players hits the same entry. Every solve uses the
    reference step dt_ref of the one-dimensional grid.
    """

    def __init__(self, spec: ProblemSpec, epsilon: float, grid: TorusGrid,
                 bandwidth: Optional[float] = None, tol: Optional[float] = None,
                 dt_ref: Optional[float] = None, method: str = "auto"):
        if grid.dim != 1:
            raise ParameterError("Master projections are evaluated on a one-dimensional grid")
        self.spec = spec
        self.epsilon = float(epsilon)
        self.grid = grid
        self.bandwidth = default_bandwidth(grid, epsilon) if bandwidth is None else float(bandwidth)
        self.tol = tol
        self.method = method
        sigma = spec.hamiltonian.lipschitz_bound
        self.dt_ref = dt_ref or spec.horizon / default_steps(grid, spec.horizon, sigma)
        self.kind = CouplingKind.mollified(epsilon)
        self._cache: Dict[Tuple, np.ndarray] = {}
        self.solves = 0

    def __len__(self) -> int:
        return len(self._cache)

    def field(self, t: float, points, i: int) -> np.ndarray:
        """u^eps(t, .) on the grid for the measure of all points but the i-th"""
        em = empirical(points, i)
        key = (round(float(t), TIME_DECIMALS), em.multiset_key())
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        horizon = self.spec.horizon
        if t >= horizon - 1e-12:
            values = self.spec.coupling.terminal_values(self.grid)
        else:
            density = project_to_grid(em, self.grid, self.bandwidth)
            steps = max(1, int(round((horizon - t) / self.dt_ref)))
            solution = solve_mfg(self.spec, float(t), density, self.kind, self.tol, steps, method=self.method)
            values = np.array(solution.u.values[0])
            self.solves += 1
        values.setflags(write=False)
        self._cache[key] = values
        return values

    def evaluate(self, i: int, t: float, x) -> float:
        """u^{N,i}(t, x) for a tensor point x of length N"""
        points = np.mod(np.asarray(x, dtype=np.float64).reshape(-1), 1.0)
        values = self.field(t, points, i)
        return float(interpolate_points(values, points[i].reshape(1, 1))[0])

    def on_nodes(self, i: int, t: float, nodes: Sequence[Sequence[int]]) -> ProjectionValues:
        """u^{N,i}(t, .) at tensor node indices"""
        idx = np.asarray(nodes, dtype=np.int64)
        coords = self.grid.coordinates
        values = np.array([self.evaluate(i, t, coords[row]) for row in idx])
        return ProjectionValues(i, float(t), idx, values, self.bandwidth)


def project_master(spec: ProblemSpec, N: int, i: int, t: float, x, epsilon: float,
                   bandwidth: Optional[float] = None, grid: Optional[TorusGrid] = None,
                   projector: Optional[MasterProjector] = None) -> float:
    """
    u^{N,i}(t, x) = U^eps(t, x_i, m^{N,i}_x)

    Args:
        spec: Problem data
        N: Number of players
        i: Player index (0-based)
        t: Time in [t0, T]
        x: Tensor point of length N
        epsilon: Mollification scale
        bandwidth: Atom projection bandwidth (default max(2h, eps/2))
        grid: One-dimensional solve grid (64 points by default)
        projector: Shared caching evaluator
    """
    point = np.asarray(x, dtype=np.float64).reshape(-1)
    if point.size != N:
        raise ParameterError(f"Tensor point has {point.size} coordinates, expected {N}")
    if projector is None:
        projector = MasterProjector(spec, epsilon, grid or TorusGrid(1, 64), bandwidth)
    return projector.evaluate(i, t, point)
