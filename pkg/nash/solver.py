"""
Nash Solver Module
Backward IMEX solver for the N-player Nash system on the tensor grid (T^1)^N.

Each player i is stored on the full tensor grid. Per step, with v = L^{-1} v^{k+1}
(full N-dimensional Laplacian, tensor FFT):
    v_i^k = v_i - dt [H(x_i, G_i v_i) - (sigma h / 2) D2_i v_i
                      + sum_{j != i} upwind(D_pH(x_j, G_j v_j)) . D_j v_i] + dt F^eps(x_i, m^{N,i})
All players are advanced simultaneously; the coupling term is tabulated once.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config.settings import config
from coupling.mollifier import MollifiedCoupling, empirical_coupling_table
from coupling.problem import ProblemSpec
from grid_core.grids import TimeGrid, TorusGrid
from grid_core.operators import central_difference, interpolate_points, second_difference
from mfg.solver import default_steps
from pde_engines.diffusion import ImplicitDiffusion
from pde_engines.transport import axis_transport, check_cfl
from utils.errors import MaximumPrincipleViolation, MemoryBudgetError, ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

BYTES_PER_VALUE = 8
WORK_ARRAYS = 6
MIN_POINTS = 8


def slice_megabytes(n_players: int, points: int) -> float:
    return BYTES_PER_VALUE * n_players * float(points) ** n_players / 2 ** 20


def memory_estimate(n_players: int, points: int, stored_slices: int) -> float:
    """Megabytes for the stored slices plus the per-step work arrays"""
    return slice_megabytes(n_players, points) * (stored_slices + WORK_ARRAYS)


def _suggest(n_players: int, points: int, budget: float) -> Optional[Tuple[int, int]]:
    m = points
    while m >= MIN_POINTS:
        if memory_estimate(n_players, m, 2) <= budget:
            return n_players, m
        m //= 2
    if n_players > 2:
        return _suggest(n_players - 1, points, budget)
    return None


def plan_storage(n_players: int, points: int, steps: int,
                 budget_mb: Optional[float] = None) -> int:
    """
    Time-slice stride that keeps the solve inside the memory budget

    Raises:
        MemoryBudgetError: not even the first and last slice fit
    """
    budget = config.NASH_MEMORY_BUDGET_MB if budget_mb is None else budget_mb
    full = memory_estimate(n_players, points, steps + 1)
    if full <= budget:
        return 1
    per_slice = slice_megabytes(n_players, points)
    slots = int(budget // per_slice) - WORK_ARRAYS
    if slots < 2:
        raise MemoryBudgetError(memory_estimate(n_players, points, 2), budget,
                                _suggest(n_players, points, budget))
    stride = int(math.ceil(steps / (slots - 1)))
    logger.warning(f"Nash storage: keeping every {stride}-th time slice to stay within {budget:.0f} MB")
    return stride


def coupling_tensor(fc: MollifiedCoupling, n_players: int) -> np.ndarray:
    """
    F^eps(x_0, m^{N,0}_x) on the tensor grid for player 0

    Other players' indices are sorted into multisets; each distinct multiset
    is evaluated once. Player i's tensor is this one with axes 0 and i swapped.
    """
    m = fc.grid.points_per_axis
    others = n_players - 1
    grid_idx = np.indices((m,) * others).reshape(others, -1)
    keys, inverse = np.unique(np.sort(grid_idx, axis=0).T, axis=0, return_inverse=True)
    table = empirical_coupling_table(fc, keys)
    values = table[np.ravel(inverse)].reshape((m,) * others + (m,))
    logger.debug(f"coupling tensor: {keys.shape[0]} distinct empirical measures for N={n_players}, M={m}")
    return np.moveaxis(values, -1, 0)


@dataclass(frozen=True)
class NashSolution:
    """
    Values v^{N,i} on stored time slices of the tensor grid

    Attributes:
        values: (S, N, M, ..., M) array, slice s at time node stored_nodes[s]
        stored_nodes: Time-node indices of the stored slices (first 0, last K)
    """
    n_players: int
    grid: TorusGrid
    time: TimeGrid
    stored_nodes: Tuple[int, ...]
    values: np.ndarray
    epsilon: float
    spec: Optional[ProblemSpec] = field(default=None, compare=False)
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def tensor_grid(self) -> TorusGrid:
        return TorusGrid(self.n_players, self.grid.points_per_axis)

    def slice_at(self, t: float) -> np.ndarray:
        """(N, M, ..., M) values at time t, linear between stored slices"""
        k, theta = self.time.locate(t)
        position = k + theta
        nodes = np.asarray(self.stored_nodes, dtype=np.float64)
        s = int(np.searchsorted(nodes, position, side="right")) - 1
        s = min(max(s, 0), len(nodes) - 2)
        weight = (position - nodes[s]) / (nodes[s + 1] - nodes[s])
        if weight <= 0.0:
            return self.values[s]
        if weight >= 1.0:
            return self.values[s + 1]
        return (1.0 - weight) * self.values[s] + weight * self.values[s + 1]

    def player_values(self, i: int, t: float) -> np.ndarray:
        return self.slice_at(t)[i]

    def value(self, i: int, t: float, x) -> float:
        """v^{N,i}(t, x), multilinear in x"""
        point = np.asarray(x, dtype=np.float64).reshape(1, self.n_players)
        return float(interpolate_points(self.player_values(i, t), point)[0])

    def gradient(self, i: int, j: int, t: float) -> np.ndarray:
        """Central difference D_{x_j} v^{N,i} at time t on the tensor grid"""
        return central_difference(self.player_values(i, t), j, self.grid.spacing)


def solve_nash(spec: ProblemSpec, N: int, epsilon: float, grid: TorusGrid, t0: float = 0.0,
               steps: Optional[int] = None, budget_mb: Optional[float] = None,
               method: str = "auto") -> NashSolution:
    """
    Solve the Nash system with mollified coupling F^eps on (T^1)^N

    Args:
        spec: Problem data
        N: Number of players (>= 2)
        epsilon: Mollification scale
        grid: One-dimensional grid of each player's state
        t0: Initial time
        steps: Time steps (CFL default dt * N * sigma / h <= CFL_SAFETY)
        budget_mb: Memory budget (config default)

    Returns:
        NashSolution

    Raises:
        MemoryBudgetError: tensor does not fit, with a suggested (N, M)
        CFLViolationError: steps too few for explicit transport
    """
    if grid.dim != 1:
        raise ParameterError("The Nash solver works with one-dimensional player states")
    if N < 2:
        raise ParameterError(f"The Nash system needs at least two players, got {N}")
    m = grid.points_per_axis
    tensor = TorusGrid(N, m)
    h = grid.spacing
    ham = spec.hamiltonian
    sigma = float(ham.lipschitz_bound)
    if steps is None:
        steps = default_steps(tensor, spec.horizon - t0, sigma)
    time = TimeGrid(t0, spec.horizon, steps)
    dt = time.dt
    check_cfl(dt, np.full(N, sigma), h, sigma)
    stride = plan_storage(N, m, steps, budget_mb)

    fc = spec.mollified(grid, epsilon, method)
    coupling0 = coupling_tensor(fc, N)
    coupling = np.stack([np.swapaxes(coupling0, 0, i) for i in range(N)])

    coords = grid.coordinates
    x_axis = [coords.reshape([m if a == i else 1 for a in range(N)])[..., None] for i in range(N)]
    terminal = spec.coupling.terminal(grid.points)
    current = np.stack([np.broadcast_to(terminal.reshape([m if a == i else 1 for a in range(N)]),
                                        tensor.shape) for i in range(N)]).astype(np.float64)

    diffusion = ImplicitDiffusion(tensor, dt)
    bound_rate = float(np.max(np.abs(coupling0))) + ham.at_zero_sup()
    bound_terminal = float(np.max(np.abs(terminal)))

    stored_nodes = sorted(set(range(0, steps + 1, stride)) | {steps})
    slots = {k: s for s, k in enumerate(stored_nodes)}
    stored = np.empty((len(stored_nodes), N) + tensor.shape)
    stored[slots[steps]] = current

    for k in range(steps - 1, -1, -1):
        v = diffusion.solve(current)
        own = np.stack([central_difference(v[i], i, h) for i in range(N)])
        velocity = np.stack([ham.gradient_p(x_axis[i], own[i][..., None])[..., 0] for i in range(N)])
        nxt = np.empty_like(current)
        for i in range(N):
            numerical = ham.value(x_axis[i], own[i][..., None]) - 0.5 * sigma * h * second_difference(v[i], i, h)
            for j in range(N):
                if j != i:
                    numerical = numerical + axis_transport(v[i], velocity[j], j, h)
            nxt[i] = v[i] - dt * numerical + dt * coupling[i]
        current = nxt

        peak = float(np.max(np.abs(current)))
        bound = bound_terminal + (spec.horizon - time.node(k)) * bound_rate + 1e-8
        if peak > bound:
            raise MaximumPrincipleViolation(f"Nash values reached {peak:.6e} at node {k}, bound {bound:.6e}")
        if k in slots:
            stored[slots[k]] = current

    logger.info(f"solve_nash N={N} M={m} K={steps} eps={epsilon:g}: {len(stored_nodes)} stored slices")
    return NashSolution(
        n_players=N,
        grid=grid,
        time=time,
        stored_nodes=tuple(stored_nodes),
        values=stored,
        epsilon=float(epsilon),
        spec=spec,
        metadata={"stride": stride, "steps": steps, "points": m, "sigma": sigma},
    )


def exchangeability_defect(solution: NashSolution, samples: int = 100, seed: int = 0) -> float:
    """
    Largest |v^{N,i}(t, x) - v^{N,i}(t, x permuted on j != i)| over sampled nodes and stored slices
    """
    rng = np.random.default_rng(seed)
    n, m = solution.n_players, solution.grid.points_per_axis
    worst = 0.0
    for _ in range(samples):
        s = int(rng.integers(len(solution.stored_nodes)))
        i = int(rng.integers(n))
        idx = rng.integers(m, size=n)
        others = [j for j in range(n) if j != i]
        perm = idx.copy()
        perm[others] = idx[rng.permutation(others)]
        block = solution.values[s, i]
        worst = max(worst, abs(float(block[tuple(idx)] - block[tuple(perm)])))
    return worst


def relabeling_defect(solution: NashSolution, samples: int = 100, seed: int = 0) -> float:
    """Largest |v^{N,i}(t, x) - v^{N,j}(t, x with x_i and x_j swapped)| over sampled nodes"""
    rng = np.random.default_rng(seed)
    n, m = solution.n_players, solution.grid.points_per_axis
    worst = 0.0
    for _ in range(samples):
        s = int(rng.integers(len(solution.stored_nodes)))
        i, j = rng.choice(n, size=2, replace=False)
        idx = rng.integers(m, size=n)
        swapped = idx.copy()
        swapped[[i, j]] = idx[[j, i]]
        a = solution.values[s, i][tuple(idx)]
        b = solution.values[s, j][tuple(swapped)]
        worst = max(worst, abs(float(a - b)))
    return worst
