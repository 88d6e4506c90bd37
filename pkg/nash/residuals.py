"""
Nash Residual Module
Finite-difference evaluation of the equation satisfied by the projections
u^{N,i}, its remainder r^{N,i}, and the derivative sizes alpha_N, beta_N.

At a sample (t, x) the x_i derivatives come from the solved field U(t, ., m^{N,i}_x);
x_j derivatives (j != i) shift atom j by +-h and re-solve; the time
derivative re-solves at t +- dt.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from config.settings import config
from coupling.mollifier import mollified_eval_empirical
from coupling.problem import ProblemSpec
from grid_core.grids import TorusGrid
from measures.empirical import empirical
from nash.projection import MasterProjector
from utils.errors import ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

SamplePoint = Tuple[float, np.ndarray]


@dataclass(frozen=True)
class NashDiagnostics:
    """
    alpha_N = sup |D_{x_i} u^{N,i}|, beta_N = sup_{j != i} |D_{x_j} u^{N,i}|,
    r_N = sup |r^{N,i}|, theta_N = 1 + alpha_N^2 + (N beta_N)^2, plus the
    second-order counterparts and theta-hat = 1 + alpha-hat + N beta-hat.
    """
    n_players: int
    alpha_N: float
    beta_N: float
    r_N: float
    theta_N: float
    hat_alpha: float = 0.0
    hat_beta: float = 0.0
    hat_theta: float = 1.0
    samples: int = 0
    noise_warning: bool = False

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def epsilon_schedule(N: int, beta: float) -> float:
    """eps_N = (ln N)^(-beta)"""
    if N < 2:
        raise ParameterError("The schedule needs N >= 2")
    if not beta > 0:
        raise ParameterError(f"Schedule exponent must be positive, got {beta}")
    return math.log(N) ** (-beta)


def sobol_sample_points(N: int, grid: TorusGrid, count: int, seed: int,
                        horizon: float = 1.0, t0: float = 0.0) -> List[SamplePoint]:
    """
    Stratified (t, x) samples: scrambled Sobol points snapped to tensor nodes,
    times kept inside (t0, T)
    """
    sampler = qmc.Sobol(d=N + 1, scramble=True, seed=seed)
    raw = sampler.random(count)
    m = grid.points_per_axis
    out = []
    for row in raw:
        t = t0 + (0.1 + 0.8 * row[0]) * (horizon - t0)
        nodes = np.minimum((row[1:] * m).astype(np.int64), m - 1)
        out.append((float(t), grid.coordinates[nodes]))
    return out


class _Stencil:
    """Values of u^{N,i} at (t, x) and its shifts, all through one projector"""

    def __init__(self, projector: MasterProjector, t: float, x: np.ndarray):
        self.p = projector
        self.t = t
        self.x = x
        self.h = projector.grid.spacing

    def field(self, i: int, shift_j: Optional[int] = None, sign: int = 0, dt: float = 0.0) -> np.ndarray:
        x = self.x.copy()
        if shift_j is not None:
            x[shift_j] = np.mod(x[shift_j] + sign * self.h, 1.0)
        return self.p.field(self.t + dt, x, i)

    def node(self, i: int) -> int:
        return int(self.p.grid.nearest_index(np.array([self.x[i]]))[0])


def _own_derivatives(values: np.ndarray, node: int, h: float) -> Tuple[float, float, float]:
    m = values.shape[0]
    left, center, right = values[(node - 1) % m], values[node], values[(node + 1) % m]
    return center, (right - left) / (2.0 * h), (right - 2.0 * center + left) / (h * h)


def residual_probe(spec: ProblemSpec, N: int, epsilon: float, sample_points: Sequence[SamplePoint],
                   projector: Optional[MasterProjector] = None, grid: Optional[TorusGrid] = None,
                   tol: Optional[float] = None, t0: float = 0.0) -> NashDiagnostics:
    """
    Evaluate -d_t u^{N,i} - sum_j Lap_{x_j} u^{N,i} + H(x_i, D_{x_i} u^{N,i})
              + sum_{j != i} D_pH(x_j, D_{x_j} u^{N,j}) . D_{x_j} u^{N,i} - F^eps(x_i, m^{N,i}_x)
    at every sample point and player

    Args:
        sample_points: (t, x) pairs with x on the tensor grid of the projector
        projector: Shared caching evaluator (built on `grid` when omitted)
        t0: Start of the time window; the time derivative is one-sided at t0

    Returns:
        NashDiagnostics; noise_warning flags cross differences at the solver noise
        floor or below NOISE_FLOOR_WARNING relative to the own-coordinate ones
    """
    if N < 2:
        raise ParameterError("residual_probe needs N >= 2")
    if projector is None:
        projector = MasterProjector(spec, epsilon, grid or TorusGrid(1, 64), tol=tol)
    ham = spec.hamiltonian
    fc = spec.mollified(projector.grid, epsilon)
    h, dt = projector.grid.spacing, projector.dt_ref
    solver_tol = config.PICARD_TOLERANCE if projector.tol is None else projector.tol

    alpha = beta = r_max = hat_alpha = hat_beta = 0.0
    smallest_cross = math.inf
    largest_own = 0.0
    for t, x in sample_points:
        x = np.mod(np.asarray(x, dtype=np.float64).reshape(N), 1.0)
        st = _Stencil(projector, t, x)
        own_grads = []
        for j in range(N):
            _, grad_j, _ = _own_derivatives(st.field(j), st.node(j), h)
            own_grads.append(grad_j)
        velocities = [float(ham.gradient_p(x[j:j + 1], np.array([g]))[0]) for j, g in enumerate(own_grads)]

        for i in range(N):
            node_i = st.node(i)
            base = st.field(i)
            u, du_i, d2u_i = _own_derivatives(base, node_i, h)
            alpha = max(alpha, abs(du_i))
            hat_alpha = max(hat_alpha, abs(d2u_i))
            largest_own = max(largest_own, abs(du_i) * 2.0 * h)

            lap = d2u_i
            cross = 0.0
            for j in range(N):
                if j == i:
                    continue
                plus, minus = st.field(i, j, +1), st.field(i, j, -1)
                up, dup, _ = _own_derivatives(plus, node_i, h)
                um, dum, _ = _own_derivatives(minus, node_i, h)
                du_j = (up - um) / (2.0 * h)
                lap += (up - 2.0 * u + um) / (h * h)
                cross += velocities[j] * du_j
                beta = max(beta, abs(du_j))
                hat_beta = max(hat_beta, abs(dup - dum) / (2.0 * h))
                smallest_cross = min(smallest_cross, abs(up - um))

            later = st.field(i, dt=dt)[node_i]
            earlier = st.field(i, dt=-dt)[node_i] if t - dt >= t0 - 1e-12 else None
            du_t = (later - earlier) / (2.0 * dt) if earlier is not None else (later - u) / dt

            coupling = mollified_eval_empirical(fc, empirical(x, i), x[i]).value
            hamiltonian = float(ham.value(x[i:i + 1], np.array([du_i])))
            residual = -du_t - lap + hamiltonian + cross - coupling
            r_max = max(r_max, abs(residual))

    noise = smallest_cross < 10.0 * solver_tol or smallest_cross < config.NOISE_FLOOR_WARNING * largest_own
    if noise:
        logger.warning(f"residual_probe N={N}: cross differences near the noise floor ({smallest_cross:.2e})")
    diagnostics = NashDiagnostics(
        n_players=N,
        alpha_N=alpha,
        beta_N=beta,
        r_N=r_max,
        theta_N=1.0 + alpha ** 2 + (N * beta) ** 2,
        hat_alpha=hat_alpha,
        hat_beta=hat_beta,
        hat_theta=1.0 + hat_alpha + N * hat_beta,
        samples=len(sample_points),
        noise_warning=bool(noise),
    )
    logger.info(f"residual_probe N={N} eps={epsilon:g}: r_N={r_max:.3e} alpha={alpha:.3e} "
                f"beta={beta:.3e} ({projector.solves} MFG solves)")
    return diagnostics
