"""
Fokker-Planck Solver Module
Conservative stepping of d_t m - Lap m + div(m b) = div(c) + f, and the
discrete duality check against the backward advection-diffusion solver.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from grid_core.fields import ScalarField, VectorField
from grid_core.grids import TimeGrid, TorusGrid
from grid_core.operators import central_difference
from measures.densities import NEGATIVE_TOLERANCE, DensityField, DensityFlow, cosine_density
from pde_engines.diffusion import ImplicitDiffusion
from pde_engines.parabolic import ParabolicProblem, drift_at, solve_parabolic, source_at
from pde_engines.transport import STENCILS, check_cfl, max_speeds, transport_transpose
from utils.errors import ConfigurationError, ConservativityFault, GridError, InvalidDensityError
from utils.logger import setup_logger

logger = setup_logger(__name__)

MASS_DRIFT_LIMIT = 1e-8


def flux_divergence(flux: np.ndarray, h: float) -> np.ndarray:
    """Centered divergence of a (d, *shape) flux; sums to zero exactly"""
    dim = flux.shape[0]
    out = np.zeros(flux.shape[1:])
    for a in range(dim):
        out += central_difference(flux[a], flux.ndim - 1 - dim + a, h)
    return out


def fokker_planck_step(m: np.ndarray, velocity: Optional[np.ndarray], diffusion: ImplicitDiffusion,
                       flux: Optional[np.ndarray] = None, source: Optional[np.ndarray] = None,
                       viscosity: float = 0.0, stencil: str = "upwind") -> np.ndarray:
    """
    m_new = L^{-1}[(I - dt B(V)^T) m + dt div_c(c) + dt f]

    The velocity V is the transport velocity of the adjoint backward equation,
    i.e. V = -b for the drift b of the density.
    """
    dt, h = diffusion.dt, diffusion.grid.spacing
    rhs = np.array(m, dtype=np.float64)
    if velocity is not None:
        rhs = rhs - dt * transport_transpose(m, velocity, h, viscosity, stencil)
    if flux is not None:
        rhs = rhs + dt * flux_divergence(flux, h)
    if source is not None:
        rhs = rhs + dt * source
    return diffusion.solve(rhs)


def clamp_negative(values: np.ndarray, grid: TorusGrid, step: int) -> np.ndarray:
    """Zero out rounding-level negative nodes, restoring the mass; larger negatives are errors"""
    low = float(np.min(values))
    if low >= 0.0:
        return values
    if low < -NEGATIVE_TOLERANCE:
        raise InvalidDensityError(f"Fokker-Planck step {step} produced value {low:.3e}")
    mass = values.sum()
    clamped = np.clip(values, 0.0, None)
    clamped *= mass / clamped.sum()
    logger.warning(f"Clamped {int(np.sum(values < 0))} negative nodes at step {step} (min {low:.2e})")
    return clamped


@dataclass(frozen=True)
class DivergenceFormProblem:
    """
    Density transport problem d_t m - Lap m + div(m b) = div(c) + f

    Attributes:
        time: Time grid
        initial: Initial density (signed ScalarField allowed when signed=True)
        drift: Drift b, spatial or over time
        flux: Extra flux c, spatial or over time
        source: Extra source f (its integral changes the mass)
        viscosity: Lax-Friedrichs parameter of the transport stencil
        signed: Skip positivity handling (perturbations rho, mu)
    """
    time: TimeGrid
    initial: Union[DensityField, ScalarField]
    drift: Optional[VectorField] = None
    flux: Optional[VectorField] = None
    source: Optional[ScalarField] = None
    viscosity: float = 0.0
    stencil: str = "upwind"
    signed: bool = False

    def __post_init__(self):
        if self.stencil not in STENCILS:
            raise ConfigurationError(f"Unknown transport stencil '{self.stencil}'")
        if isinstance(self.initial, ScalarField):
            if self.initial.is_time_dependent:
                raise GridError("Initial data must be a spatial field")
            if not self.signed:
                object.__setattr__(self, "initial", DensityField(self.initial))
        for field in (self.drift, self.flux, self.source):
            if field is not None:
                self.grid.require_match(field.grid)
                if field.is_time_dependent and field.time != self.time:
                    raise GridError("Coefficient is defined on a different time grid")

    @property
    def grid(self) -> TorusGrid:
        return self.initial.grid


def _velocity(drift: Optional[VectorField], k: int) -> Optional[np.ndarray]:
    b = drift_at(drift, k)
    return None if b is None else -b


def solve_fokker_planck(p: DivergenceFormProblem) -> Union[DensityFlow, ScalarField]:
    """
    Forward conservative solve

    Returns:
        DensityFlow, or a signed space-time ScalarField when p.signed

    Raises:
        CFLViolationError: transport step too large for the drift
        ConservativityFault: per-step mass change differs from the source integral by > 1e-8
        InvalidDensityError: a node dropped below -1e-12
    """
    grid, time = p.grid, p.time
    if p.drift is not None:
        check_cfl(time.dt, max_speeds(p.drift.values, grid.dim), grid.spacing,
                  p.viscosity if p.stencil == "upwind" else 0.0)

    diffusion = ImplicitDiffusion(grid, time.dt)
    vol = grid.cell_volume
    out = np.empty((time.node_count,) + grid.shape)
    out[0] = p.initial.values
    for k in range(time.steps):
        src = source_at(p.source, k)
        flux = drift_at(p.flux, k)
        nxt = fokker_planck_step(out[k], _velocity(p.drift, k), diffusion, flux, src,
                                 p.viscosity, p.stencil)
        expected = out[k].sum() * vol + (0.0 if src is None else time.dt * src.sum() * vol)
        drift = abs(nxt.sum() * vol - expected)
        if drift > MASS_DRIFT_LIMIT:
            raise ConservativityFault(k, drift)
        out[k + 1] = nxt if p.signed else clamp_negative(nxt, grid, k)

    field = ScalarField(grid, out, time)
    return field if p.signed else DensityFlow(field)


def adjoint_consistency_check(V: VectorField, steps: Optional[int] = None, horizon: float = 1.0,
                              viscosity: float = 0.0, seed: int = 0) -> float:
    """
    Duality defect of the backward/forward pair

    Solves -d_t w - Lap w + V.Dw = 0 backward from a smooth random w(T) and
    d_t rho - Lap rho - div(V rho) = 0 forward from a smooth random density,
    then returns |<w(T), rho(T)> - <w(t0), rho(t0)>| (cell-volume weighted).

    Args:
        V: Velocity, spatial (with `steps`) or time dependent
        steps: Time steps on [0, horizon] when V is spatial
        viscosity: Lax-Friedrichs parameter shared by both solves
        seed: Seed of the random terminal and initial data
    """
    grid = V.grid
    if V.is_time_dependent:
        time = V.time
    else:
        if steps is None:
            raise ConfigurationError("steps is required for a time-independent velocity")
        time = TimeGrid(0.0, horizon, steps)

    rng = np.random.default_rng(seed)
    x = grid.points[..., 0]
    terminal = sum(rng.normal() * np.cos(2.0 * np.pi * k * x + rng.uniform(0.0, 2.0 * np.pi))
                   for k in range(1, 4))
    rho0 = cosine_density(grid, 0.5, 1 + int(rng.integers(3)), rng.uniform(0.0, 2.0 * np.pi))

    w = solve_parabolic(ParabolicProblem("backward", time, ScalarField(grid, terminal), V,
                                         viscosity=viscosity))
    minus_v = VectorField(grid, -V.values, V.time)
    rho = solve_fokker_planck(DivergenceFormProblem(time, rho0, drift=minus_v, viscosity=viscosity))

    vol = grid.cell_volume
    end = float(np.sum(w.values[-1] * rho.values[-1]) * vol)
    start = float(np.sum(w.values[0] * rho.values[0]) * vol)
    defect = abs(end - start)
    logger.debug(f"adjoint_consistency_check K={time.steps}: defect {defect:.3e}")
    return defect
