"""
MFG Solver Module
Damped Picard iteration for the coupled HJB / Fokker-Planck system with a
local or mollified coupling. U(t0, x, m0) is read off as u(t0, x).

Discretization (sigma = Lipschitz bound of H in p, L = I - dt Lap_h):
    v^k     = L^{-1} u^{k+1}
    u^k     = v^k - dt [H(x, G v^k) - (sigma h / 2) Lap_h v^k] + dt F(m^k)
    m^{k+1} = L^{-1} (I - dt B(D_pH(x, G v^k), sigma)^T) m^k
The FP step is the exact adjoint of the linearized HJB step.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config.settings import config
from coupling.problem import CouplingKind, ProblemSpec
from grid_core.fields import ScalarField
from grid_core.grids import TimeGrid, TorusGrid
from grid_core.operators import gradient_values, laplacian_values
from measures.densities import DensityField, DensityFlow
from pde_engines.diffusion import ImplicitDiffusion
from pde_engines.fokker_planck import fokker_planck_step
from pde_engines.transport import check_cfl
from utils.errors import DivergenceError, InvalidDensityError, ParameterError, UnsupportedDimensionError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def to_last(vectors: np.ndarray, dim: int) -> np.ndarray:
    """Move the component axis of (..., d, *shape) arrays to the end"""
    return np.moveaxis(vectors, -dim - 1, -1)


def to_components(vectors: np.ndarray, dim: int) -> np.ndarray:
    return np.moveaxis(vectors, -1, -dim - 1)


def default_steps(grid: TorusGrid, duration: float, speed: float = 1.0) -> int:
    """Smallest step count with dt * d * speed / h <= CFL_SAFETY"""
    return max(1, int(math.ceil(duration * grid.dim * speed / (config.CFL_SAFETY * grid.spacing))))


@dataclass(frozen=True)
class ManufacturedSources:
    """Extra sources f_u, f_m turning (u*, m*) into an exact solution"""
    f_u: np.ndarray
    f_m: np.ndarray
    u_exact: np.ndarray
    m_exact: np.ndarray


def manufactured_sources(spec: ProblemSpec, grid: TorusGrid, time: TimeGrid, kind: CouplingKind,
                         u_amplitude: float = 0.1, m_amplitude: float = 0.3) -> ManufacturedSources:
    """
    Sources for u*(t,x) = a (T - t) cos(2 pi x), m*(t,x) = 1 + b e^{-t} cos(2 pi x)

    f_u = -u*_t - Lap u* + H(x, Du*) - F(x, m*) and f_m = m*_t - Lap m* - div(m* D_pH(Du*)),
    with f_m centred per time node. D_pH is assumed independent of x.
    """
    if grid.dim != 1:
        raise UnsupportedDimensionError("Manufactured solutions are provided in 1-D")
    ham = spec.hamiltonian
    t = time.nodes[:, None]
    x = grid.points[..., 0][None, :]
    two_pi = 2.0 * np.pi
    cos, sin = np.cos(two_pi * x), np.sin(two_pi * x)
    left = spec.horizon - t

    u = u_amplitude * left * cos
    u_t = -u_amplitude * cos * np.ones_like(t)
    u_x = -two_pi * u_amplitude * left * sin
    u_xx = -two_pi ** 2 * u_amplitude * left * cos

    decay = np.exp(-t)
    m = 1.0 + m_amplitude * decay * cos
    m_t = -m_amplitude * decay * cos
    m_x = -two_pi * m_amplitude * decay * sin
    m_xx = -two_pi ** 2 * m_amplitude * decay * cos

    xs = np.broadcast_to(grid.points, u.shape + (1,))
    p = u_x[..., None]
    velocity = ham.gradient_p(xs, p)[..., 0]
    dvel = ham.hessian_p(xs, p)[..., 0, 0] * u_xx

    operator = spec.operator(grid, kind)
    f_u = -u_t - u_xx + ham.value(xs, p) - operator.evaluate(m)
    f_m = m_t - m_xx - (m_x * velocity + m * dvel)
    f_m = f_m - f_m.mean(axis=-1, keepdims=True)
    return ManufacturedSources(f_u, f_m, u, m)


@dataclass(frozen=True)
class MFGSolution:
    """
    Solution (u, m) of the discrete MFG system on [t0, T]

    u(T) = G and m(t0) = m0 hold exactly.
    """
    u: ScalarField
    m: DensityFlow
    iterations: int
    fixed_point_residual: float
    coupling_kind: CouplingKind
    residual_history: Tuple[float, ...] = ()
    spec: Optional[ProblemSpec] = field(default=None, compare=False)
    viscosity: float = 1.0
    method: str = "auto"

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @property
    def time(self) -> TimeGrid:
        return self.u.time

    @property
    def t0(self) -> float:
        return self.time.t0

    def value(self, t: Optional[float] = None) -> ScalarField:
        """x -> u(t, x); at t0 this is U(t0, ., m0)"""
        return self.u.at_time(self.t0 if t is None else t)

    def operator(self):
        return self.spec.operator(self.grid, self.coupling_kind, self.method)

    def smoothed_values(self) -> np.ndarray:
        """v^k = L^{-1} u^{k+1} for k = 0..K-1"""
        diffusion = ImplicitDiffusion(self.grid, self.time.dt)
        return diffusion.solve(self.u.values[1:])

    def feedback_gradients(self) -> np.ndarray:
        """G v^k for k = 0..K-1, shape (K, d, *shape)"""
        return gradient_values(self.smoothed_values(), self.grid.dim, self.grid.spacing)

    def feedback(self) -> np.ndarray:
        """Velocities D_pH(x, G v^k), shape (K, d, *shape); agents move with minus this"""
        dim = self.grid.dim
        p = to_last(self.feedback_gradients(), dim)
        return to_components(self.spec.hamiltonian.gradient_p(self.grid.points, p), dim)


class _MFGStepper:
    """HJB and FP sweeps for fixed data"""

    def __init__(self, spec: ProblemSpec, grid: TorusGrid, time: TimeGrid, operator,
                 sources: Optional[ManufacturedSources]):
        self.ham = spec.hamiltonian
        self.grid = grid
        self.time = time
        self.operator = operator
        self.sources = sources
        self.sigma = float(self.ham.lipschitz_bound)
        self.diffusion = ImplicitDiffusion(grid, time.dt)
        self.terminal = spec.coupling.terminal_values(grid)
        self.points = grid.points

    def hjb(self, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Backward sweep; returns u (K+1, *shape) and D_pH(x, G v^k) (K, d, *shape)"""
        grid, dt, h, dim = self.grid, self.time.dt, self.grid.spacing, self.grid.dim
        coupling = self.operator.evaluate(m)
        if self.sources is not None:
            coupling = coupling + self.sources.f_u
        u = np.empty((self.time.node_count,) + grid.shape)
        velocity = np.empty((self.time.steps, dim) + grid.shape)
        u[-1] = self.terminal
        for k in range(self.time.steps - 1, -1, -1):
            v = self.diffusion.solve(u[k + 1])
            p = to_last(gradient_values(v, dim, h), dim)
            numerical = self.ham.value(self.points, p) - 0.5 * self.sigma * h * laplacian_values(v, dim, h)
            u[k] = v - dt * numerical + dt * coupling[k]
            velocity[k] = to_components(self.ham.gradient_p(self.points, p), dim)
        return u, velocity

    def fp(self, m0: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        m = np.empty((self.time.node_count,) + self.grid.shape)
        m[0] = m0
        for k in range(self.time.steps):
            source = None if self.sources is None else self.sources.f_m[k]
            m[k + 1] = fokker_planck_step(m[k], velocity[k], self.diffusion, source=source,
                                          viscosity=self.sigma)
        return m


def _check_residual_trend(history: List[float], window: int = 10):
    tail = history[-window:]
    if len(tail) == window and any(b > a * (1.0 + 1e-6) for a, b in zip(tail, tail[1:])):
        logger.warning(f"Picard residual not monotone over the last {window} iterations: {tail}")


def solve_mfg(spec: ProblemSpec, t0: float, m0: DensityField, kind: CouplingKind,
              tol: Optional[float] = None, steps: Optional[int] = None,
              relaxation: Optional[float] = None, max_iters: Optional[int] = None,
              sources: Optional[ManufacturedSources] = None,
              initial_guess: Optional[np.ndarray] = None, method: str = "auto") -> MFGSolution:
    """
    Solve the MFG system from (t0, m0) up to spec.horizon

    Args:
        spec: Problem data (H, F, G, kernel, horizon)
        t0: Initial time, below spec.horizon
        m0: Initial density (strictly positive for the local coupling)
        kind: Local or mollified coupling
        tol: Sup-norm tolerance of the Picard update of m (config default)
        steps: Time steps; derived from the transport CFL bound when omitted
        relaxation: Picard damping lambda in (0, 1]
        max_iters: Picard iteration cap
        sources: Manufactured sources added to both equations
        initial_guess: Starting flow m (K+1, *shape); m0 held constant by default
        method: Convolution method of the mollified coupling

    Returns:
        MFGSolution with residual history

    Raises:
        InvalidDensityError: m0 not strictly positive for the local coupling
        CFLViolationError: explicit steps too large for the grid
        DivergenceError: no convergence within max_iters
    """
    tol = config.PICARD_TOLERANCE if tol is None else tol
    relaxation = config.PICARD_RELAXATION if relaxation is None else relaxation
    max_iters = config.PICARD_MAX_ITERS if max_iters is None else max_iters
    if not tol > 0:
        raise ParameterError(f"Tolerance must be positive, got {tol}")
    if not 0.0 < relaxation <= 1.0:
        raise ParameterError(f"Relaxation must lie in (0, 1], got {relaxation}")
    if kind.kind == "local" and float(np.min(m0.values)) <= 0.0:
        raise InvalidDensityError("The local coupling needs a strictly positive initial density")

    grid = m0.grid
    sigma = float(spec.hamiltonian.lipschitz_bound)
    if steps is None:
        steps = default_steps(grid, spec.horizon - t0, sigma)
    time = TimeGrid(t0, spec.horizon, steps)
    check_cfl(time.dt, np.full(grid.dim, sigma), grid.spacing, sigma)

    operator = spec.operator(grid, kind, method)
    stepper = _MFGStepper(spec, grid, time, operator, sources)

    if initial_guess is not None:
        m = np.array(initial_guess, dtype=np.float64)
        m[0] = m0.values
    else:
        m = np.broadcast_to(m0.values, (time.node_count,) + grid.shape).copy()

    history: List[float] = []
    for it in range(1, max_iters + 1):
        _, velocity = stepper.hjb(m)
        m_new = stepper.fp(m0.values, velocity)
        residual = float(np.max(np.abs(m_new - m)))
        history.append(residual)
        if not np.isfinite(residual):
            raise DivergenceError(f"Picard residual became non-finite at iteration {it}", history)
        m = m_new if relaxation == 1.0 else (1.0 - relaxation) * m + relaxation * m_new
        m[0] = m0.values
        logger.debug(f"Picard {kind.label} iteration {it}: residual {residual:.3e}")
        if residual < tol:
            break
    else:
        raise DivergenceError(
            f"Picard iteration ({kind.label}) did not reach {tol:.1e} in {max_iters} iterations "
            f"(last residual {history[-1]:.3e}); lower the relaxation", history
        )
    _check_residual_trend(history)

    u, _ = stepper.hjb(m)
    flow = ScalarField(grid, m, time)
    solution = MFGSolution(
        u=ScalarField(grid, u, time),
        m=DensityFlow(flow),
        iterations=len(history),
        fixed_point_residual=history[-1],
        coupling_kind=kind,
        residual_history=tuple(history),
        spec=spec,
        viscosity=sigma,
        method=method,
    )
    logger.info(f"solve_mfg {kind.label}: M={grid.points_per_axis} K={steps} "
                f"converged in {solution.iterations} iterations (residual {solution.fixed_point_residual:.2e})")
    return solution
