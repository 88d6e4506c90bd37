"""
Drift Specifications Module
Feedback drifts of the particle systems: Nash (Y), projected master (X),
mollified MFG (X-hat), local MFG (X-tilde), plus synthetic drifts.

Evaluators are batched: (t, step, states[K, N, d]) -> velocities[K, N, d].
Velocities already carry the sign of the dynamics, dX = velocity dt + sqrt(2) dB.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from grid_core.fields import VectorField
from grid_core.operators import central_difference, interpolate_points
from mfg.solver import MFGSolution
from nash.projection import MasterProjector
from nash.solver import NashSolution
from utils.errors import ParameterError

Evaluator = Callable[[float, int, np.ndarray], np.ndarray]


class DriftKind(str, Enum):
    NASH = "nash"
    PROJECTED_MASTER = "master"
    MFG_MOLLIFIED = "mfg-eps"
    MFG_LOCAL = "mfg-local"
    CONSTANT = "constant"
    FIELD = "field"
    ZERO = "zero"


@dataclass(frozen=True)
class DriftSpec:
    """Deterministic batched drift with a sup bound"""
    kind: DriftKind
    evaluator: Evaluator
    bound: float
    dim: int = 1
    label: str = ""

    def __call__(self, t: float, step: int, states: np.ndarray) -> np.ndarray:
        return self.evaluator(t, step, states)

    def evaluate(self, i: int, t: float, state: np.ndarray, step: int = 0) -> np.ndarray:
        """Velocity of player i for one full state (N, d)"""
        batch = np.asarray(state, dtype=np.float64)[None]
        return self.evaluator(t, step, batch)[0, i]


def zero_drift(dim: int = 1) -> DriftSpec:
    return DriftSpec(DriftKind.ZERO, lambda t, step, x: np.zeros_like(x), 0.0, dim, "zero")


def constant_drift(vector) -> DriftSpec:
    b = np.atleast_1d(np.asarray(vector, dtype=np.float64))
    return DriftSpec(DriftKind.CONSTANT, lambda t, step, x: np.broadcast_to(b, x.shape).copy(),
                     float(np.linalg.norm(b)), b.size, f"constant({b.tolist()})")


def function_drift(fn: Callable[[float, np.ndarray], np.ndarray], bound: float, dim: int = 1,
                   label: str = "function") -> DriftSpec:
    """Drift given by fn(t, x) acting on each particle independently"""
    return DriftSpec(DriftKind.FIELD, lambda t, step, x: np.asarray(fn(t, x), dtype=np.float64),
                     float(bound), dim, label)


def field_drift(field: VectorField, label: str = "field") -> DriftSpec:
    """Drift interpolated from a (spatial or time-dependent) grid vector field"""
    grid = field.grid

    def evaluate(t, step, x):
        values = field.values
        if field.is_time_dependent:
            k, theta = field.time.locate(t)
            values = (1.0 - theta) * values[k] + theta * values[min(k + 1, field.time.steps)]
        flat = x.reshape(-1, grid.dim)
        out = np.stack([interpolate_points(values[a], flat) for a in range(grid.dim)], axis=-1)
        return out.reshape(x.shape)

    return DriftSpec(DriftKind.FIELD, evaluate, field.sup_norm(), grid.dim, label)


def mfg_drift(solution: MFGSolution) -> DriftSpec:
    """
    -D_pH(x, G v^k) interpolated at each particle (players do not interact)

    The step index k is taken from the solution's time grid.
    """
    grid = solution.grid
    feedback = solution.feedback()
    steps = solution.time.steps
    kind = DriftKind.MFG_LOCAL if solution.coupling_kind.kind == "local" else DriftKind.MFG_MOLLIFIED

    def evaluate(t, step, x):
        k = min(solution.time.locate(t)[0], steps - 1)
        flat = x.reshape(-1, grid.dim)
        out = np.stack([interpolate_points(feedback[k, a], flat) for a in range(grid.dim)], axis=-1)
        return -out.reshape(x.shape)

    return DriftSpec(kind, evaluate, solution.spec.hamiltonian.lipschitz_bound, grid.dim,
                     solution.coupling_kind.label)


def nash_drift(solution: NashSolution) -> DriftSpec:
    """-D_pH(x_i, D_{x_i} v^{N,i}(t, Y)) with multilinear interpolation on the tensor grid"""
    n = solution.n_players
    h = solution.grid.spacing
    ham = solution.spec.hamiltonian
    cache: Dict[float, np.ndarray] = {}

    def gradients(t: float) -> np.ndarray:
        key = round(t, 12)
        if key not in cache:
            cache.clear()
            block = solution.slice_at(t)
            cache[key] = np.stack([central_difference(block[i], i, h) for i in range(n)])
        return cache[key]

    def evaluate(t, step, x):
        grads = gradients(t)
        states = x[..., 0]
        flat = states.reshape(-1, n)
        p = np.stack([interpolate_points(grads[i], flat) for i in range(n)], axis=-1)
        velocity = ham.gradient_p(flat[..., None], p[..., None])
        return -velocity.reshape(x.shape)

    return DriftSpec(DriftKind.NASH, evaluate, ham.lipschitz_bound, 1, f"nash(N={n})")


def projected_master_drift(projector: MasterProjector, n_players: int) -> DriftSpec:
    """
    -D_pH(x_i, D_{x_i} u^{N,i}(t, X)) served from quantized states

    States are snapped to the nearest tensor node (tolerance h/2); gradients are
    central differences of the cached field U(t, ., m^{N,i}) at x_i.
    """
    grid = projector.grid
    h = grid.spacing
    ham = projector.spec.hamiltonian
    coords = grid.coordinates
    m = grid.points_per_axis
    memo: Dict[Tuple, float] = {}

    def gradient(t: float, nodes: Tuple[int, ...], i: int) -> float:
        key = (round(t, 12), i, nodes)
        if key not in memo:
            field = projector.field(t, coords[list(nodes)], i)
            node = nodes[i]
            memo[key] = float((field[(node + 1) % m] - field[(node - 1) % m]) / (2.0 * h))
        return memo[key]

    def evaluate(t, step, x):
        states = x[..., 0]
        nodes = grid.nearest_index(states[..., None])[..., 0]
        out = np.empty(states.shape)
        for r in range(states.shape[0]):
            row = tuple(int(v) for v in nodes[r])
            for i in range(n_players):
                out[r, i] = gradient(t, row, i)
        velocity = ham.gradient_p(states[..., None], out[..., None])
        return -velocity.reshape(x.shape)

    if n_players < 2:
        raise ParameterError("Projected master drift needs N >= 2")
    return DriftSpec(DriftKind.PROJECTED_MASTER, evaluate, ham.lipschitz_bound, 1,
                     f"master(N={n_players}, eps={projector.epsilon:g})")


def shifted_drift(base: DriftSpec, shift, label: Optional[str] = None) -> DriftSpec:
    """base + constant shift (pairs with a known sup-difference)"""
    b = np.atleast_1d(np.asarray(shift, dtype=np.float64))
    return DriftSpec(base.kind, lambda t, step, x: base(t, step, x) + b, base.bound + float(np.linalg.norm(b)),
                     base.dim, label or f"{base.label}+{b.tolist()}")
