"""
Parabolic Solver Module
IMEX stepping of the linear equation +/- d_t w - Lap w + V . Dw = f on the torus.

Diffusion is implicit (FFT), transport and source explicit. Forward problems
start from w(t0), backward problems from w(T); both run through the same step
    w_new = (I - dt B(V_k)) (I - dt Lap_h)^{-1} w_old + dt f_k
with k the earlier time node of the step.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from grid_core.fields import ScalarField, VectorField
from grid_core.grids import TimeGrid, TorusGrid
from pde_engines.diffusion import ImplicitDiffusion
from pde_engines.transport import STENCILS, check_cfl, max_speeds, transport
from utils.errors import ConfigurationError, GridError, MaximumPrincipleViolation
from utils.logger import setup_logger

logger = setup_logger(__name__)

MAX_PRINCIPLE_SLACK = 1e-10


def drift_at(drift: Optional[VectorField], k: int) -> Optional[np.ndarray]:
    """Raw (d, *shape) drift values at time node k"""
    if drift is None:
        return None
    return drift.values[k] if drift.is_time_dependent else drift.values


def source_at(source: Optional[ScalarField], k: int) -> Optional[np.ndarray]:
    if source is None:
        return None
    return source.values[k] if source.is_time_dependent else source.values


def _check_time_axis(field, time: TimeGrid, what: str):
    if field is not None and field.is_time_dependent and field.time != time:
        raise GridError(f"{what} is defined on a different time grid")


@dataclass(frozen=True)
class ParabolicProblem:
    """
    Linear advection-diffusion problem

    Attributes:
        direction: "forward" (data at t0) or "backward" (data at T)
        time: Time grid
        data: Spatial initial or terminal values
        drift: Velocity V, spatial or defined at every time node
        source: Right-hand side f, spatial or defined at every time node
        viscosity: Lax-Friedrichs parameter sigma of the transport stencil
        stencil: "upwind" (monotone) or "central"
    """
    direction: str
    time: TimeGrid
    data: ScalarField
    drift: Optional[VectorField] = None
    source: Optional[ScalarField] = None
    viscosity: float = 0.0
    stencil: str = "upwind"

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ConfigurationError(f"direction must be forward or backward, got '{self.direction}'")
        if self.stencil not in STENCILS:
            raise ConfigurationError(f"Unknown transport stencil '{self.stencil}'")
        if self.data.is_time_dependent:
            raise GridError("Parabolic data must be a spatial field")
        for field, what in ((self.drift, "drift"), (self.source, "source")):
            if field is not None:
                self.data.grid.require_match(field.grid, what)
                _check_time_axis(field, self.time, what)

    @property
    def grid(self) -> TorusGrid:
        return self.data.grid

    @property
    def monotone(self) -> bool:
        return self.stencil == "upwind"


def parabolic_step(w: np.ndarray, velocity: Optional[np.ndarray], source: Optional[np.ndarray],
                   diffusion: ImplicitDiffusion, viscosity: float = 0.0,
                   stencil: str = "upwind") -> np.ndarray:
    """One step (I - dt B) L^{-1} w + dt f on raw arrays"""
    dt = diffusion.dt
    v = diffusion.solve(w)
    out = v
    if velocity is not None:
        out = v - dt * transport(v, velocity, diffusion.grid.spacing, viscosity, stencil)
    if source is not None:
        out = out + dt * source
    return out


def solve_parabolic(p: ParabolicProblem) -> ScalarField:
    """
    Solve a ParabolicProblem on its time grid

    Returns:
        Space-time ScalarField with w at every time node

    Raises:
        CFLViolationError: dt * sum_a max|V_a| / h > 1
        MaximumPrincipleViolation: monotone run exceeded ||w0|| + |t - t0| ||f||
    """
    grid, time = p.grid, p.time
    h, dt = grid.spacing, time.dt
    if p.drift is not None:
        check_cfl(dt, max_speeds(p.drift.values, grid.dim), h, p.viscosity if p.monotone else 0.0)

    diffusion = ImplicitDiffusion(grid, dt)
    out = np.empty((time.node_count,) + grid.shape)
    forward = p.direction == "forward"
    start = 0 if forward else time.steps
    out[start] = p.data.values

    bound_data = p.data.sup_norm()
    bound_source = 0.0 if p.source is None else p.source.sup_norm()

    order = range(time.steps) if forward else range(time.steps - 1, -1, -1)
    for k in order:
        src, dst = (k, k + 1) if forward else (k + 1, k)
        out[dst] = parabolic_step(out[src], drift_at(p.drift, k), source_at(p.source, k),
                                  diffusion, p.viscosity, p.stencil)
        if p.monotone:
            elapsed = abs(time.node(dst) - time.node(start))
            bound = bound_data + elapsed * bound_source + MAX_PRINCIPLE_SLACK
            peak = float(np.max(np.abs(out[dst])))
            if peak > bound:
                raise MaximumPrincipleViolation(
                    f"|w| reached {peak:.6e} at time node {dst}, bound {bound:.6e}"
                )

    logger.debug(f"solve_parabolic {p.direction}: M={grid.points_per_axis} d={grid.dim} K={time.steps}")
    return ScalarField(grid, out, time)
