"""
Linearized MFG Module
First- and second-order linearizations of the discrete MFG system around a
converged solution, and the duality (energy) identity they satisfy.

With B_k = B(V_k, sigma), V_k = D_pH(x, G v^k), Gamma_k = D2_ppH(x, G v^k) and
dv = L^{-1} z^{k+1}, the first-order system reads
    z^k     = (I - dt B_k) L^{-1} z^{k+1} + dt dF(m^k)(rho^k),          z^K = 0
    rho^{k+1} = L^{-1}[(I - dt B_k^T) rho^k + dt div_c(m^k Gamma_k G dv)],  rho^0 = rho0
which is the exact derivative of the discrete solution map in m0.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config.settings import config
from grid_core.fields import ScalarField
from grid_core.operators import gradient_values
from mfg.solver import MFGSolution, to_components, to_last
from pde_engines.diffusion import ImplicitDiffusion
from pde_engines.fokker_planck import fokker_planck_step
from pde_engines.parabolic import parabolic_step
from utils.errors import DivergenceError, GridError
from utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class LinearizedSolution:
    """
    (z, rho) for order "first", (w, mu) for order "second"

    z(T) = 0 always; rho(t0) = rho0 at first order and 0 at second order.
    """
    z: ScalarField
    rho: ScalarField
    order: str
    iterations: int = 0
    residual: float = 0.0

    def masses(self) -> np.ndarray:
        return self.rho.integral()


class _Frozen:
    """Base coefficients frozen along a converged MFG solution"""

    def __init__(self, base: MFGSolution):
        self.base = base
        self.grid = base.grid
        self.time = base.time
        self.dim = self.grid.dim
        self.h = self.grid.spacing
        self.sigma = base.viscosity
        self.diffusion = ImplicitDiffusion(self.grid, self.time.dt)
        self.operator = base.operator()
        self.m = base.m.values
        ham = base.spec.hamiltonian
        self.points = self.grid.points
        self.p = to_last(base.feedback_gradients(), self.dim)
        self.velocity = to_components(ham.gradient_p(self.points, self.p), self.dim)
        self.hessian = ham.hessian_p(self.points, self.p)
        self.ham = ham

    def smoothed_gradient(self, z_next: np.ndarray) -> np.ndarray:
        """G L^{-1} z^{k+1} as (*shape, d)"""
        return to_last(gradient_values(self.diffusion.solve(z_next), self.dim, self.h), self.dim)

    def gamma_action(self, k: int, q: np.ndarray) -> np.ndarray:
        """Gamma_k q for q of shape (*shape, d)"""
        return np.einsum("...ij,...j->...i", self.hessian[k], q)

    def backward(self, sources: np.ndarray) -> np.ndarray:
        """Linear backward sweep with zero terminal data"""
        out = np.zeros((self.time.node_count,) + self.grid.shape)
        for k in range(self.time.steps - 1, -1, -1):
            out[k] = parabolic_step(out[k + 1], self.velocity[k], sources[k], self.diffusion, self.sigma)
        return out

    def forward(self, initial: np.ndarray, flux_of) -> np.ndarray:
        """Linear forward sweep; flux_of(k, z_next) returns the (d, *shape) flux"""
        out = np.empty((self.time.node_count,) + self.grid.shape)
        out[0] = initial
        for k in range(self.time.steps):
            out[k + 1] = fokker_planck_step(out[k], self.velocity[k], self.diffusion,
                                            flux=flux_of(k), viscosity=self.sigma)
        return out


def _picard(frozen: _Frozen, initial: np.ndarray, z_of, flux_for, tol: float, relaxation: float,
            max_iters: int, label: str) -> Tuple[np.ndarray, np.ndarray, int, float]:
    """Damped Picard on the density component of a linear forward-backward pair"""
    rho = np.broadcast_to(initial, (frozen.time.node_count,) + frozen.grid.shape).copy()
    history: List[float] = []
    for it in range(1, max_iters + 1):
        z = z_of(rho)
        rho_new = frozen.forward(initial, flux_for(z, rho))
        scale = max(float(np.max(np.abs(rho_new))), 1e-300)
        residual = float(np.max(np.abs(rho_new - rho))) / scale
        history.append(residual)
        if not np.isfinite(residual):
            raise DivergenceError(f"{label} Picard became non-finite at iteration {it}", history)
        rho = (1.0 - relaxation) * rho + relaxation * rho_new
        rho[0] = initial
        if residual < tol:
            return z_of(rho), rho, it, residual
    raise DivergenceError(f"{label} Picard did not reach {tol:.1e} in {max_iters} iterations", history)


def solve_linearized_first(base: MFGSolution, rho0: ScalarField, tol: Optional[float] = None,
                           relaxation: Optional[float] = None,
                           max_iters: Optional[int] = None) -> LinearizedSolution:
    """
    First-order linearized system around base

    Args:
        base: Converged MFG solution
        rho0: Spatial perturbation of m0 (zero mean recommended)
        tol: Relative Picard tolerance (config default)

    Returns:
        LinearizedSolution with z(t0, .) = <dU/dm(t0, ., m0), rho0>

    Raises:
        DivergenceError: no convergence, also after one retry with halved relaxation
    """
    frozen = _Frozen(base)
    frozen.grid.require_match(rho0.grid, "rho0")
    if rho0.is_time_dependent:
        raise GridError("rho0 must be a spatial field")
    tol = config.PICARD_TOLERANCE if tol is None else tol
    relaxation = config.PICARD_RELAXATION if relaxation is None else relaxation
    max_iters = config.PICARD_MAX_ITERS if max_iters is None else max_iters

    time, grid = frozen.time, frozen.grid
    zeros = np.zeros((time.node_count,) + grid.shape)
    if not np.any(rho0.values):
        return LinearizedSolution(ScalarField(grid, zeros, time), ScalarField(grid, zeros, time), "first")

    def z_of(rho):
        return frozen.backward(frozen.operator.first_variation(frozen.m, rho))

    def flux_for(z, rho):
        def flux(k):
            q = frozen.smoothed_gradient(z[k + 1])
            return to_components(frozen.m[k][..., None] * frozen.gamma_action(k, q), frozen.dim)
        return flux

    try:
        z, rho, its, res = _picard(frozen, rho0.values, z_of, flux_for, tol, relaxation, max_iters, "first-order")
    except DivergenceError:
        logger.warning("First-order linearized Picard failed, retrying with halved relaxation")
        z, rho, its, res = _picard(frozen, rho0.values, z_of, flux_for, tol, 0.5 * relaxation,
                                   max_iters, "first-order")
    logger.debug(f"solve_linearized_first converged in {its} iterations (residual {res:.2e})")
    return LinearizedSolution(ScalarField(grid, z, time), ScalarField(grid, rho, time), "first", its, res)


def solve_linearized_second(base: MFGSolution, first: LinearizedSolution, tol: Optional[float] = None,
                            relaxation: Optional[float] = None,
                            max_iters: Optional[int] = None) -> LinearizedSolution:
    """
    Second-order linearized system (w, mu) driven by the quadratic sources of (z, rho)

    w source: -D2H[G dz, G dz] + d2F(rho, rho) + dF(mu)
    mu flux:  m D3H[G dz, G dz] + 2 rho Gamma G dz + m Gamma G dw
    with dz = L^{-1} z^{k+1}, dw = L^{-1} w^{k+1}; w(T) = 0, mu(t0) = 0.
    """
    if first.order != "first":
        raise GridError("solve_linearized_second needs a first-order solution")
    frozen = _Frozen(base)
    tol = config.PICARD_TOLERANCE if tol is None else tol
    relaxation = config.PICARD_RELAXATION if relaxation is None else relaxation
    max_iters = config.PICARD_MAX_ITERS if max_iters is None else max_iters

    time, grid, dim = frozen.time, frozen.grid, frozen.dim
    zeros = np.zeros((time.node_count,) + grid.shape)
    z, rho = first.z.values, first.rho.values
    if not np.any(rho) and not np.any(z):
        return LinearizedSolution(ScalarField(grid, zeros, time), ScalarField(grid, zeros, time), "second")

    qz = np.stack([frozen.smoothed_gradient(z[k + 1]) for k in range(time.steps)])
    hess_qq = np.einsum("k...i,k...ij,k...j->k...", qz, frozen.hessian, qz)
    base_source = np.zeros_like(zeros)
    base_source[:-1] = -hess_qq + frozen.operator.second_variation(frozen.m[:-1], rho[:-1], rho[:-1])
    third = frozen.ham.third_contract(frozen.points, frozen.p, qz)
    fixed_flux = frozen.m[:-1, ..., None] * third + 2.0 * rho[:-1, ..., None] * np.einsum(
        "k...ij,k...j->k...i", frozen.hessian, qz)

    def z_of(mu):
        return frozen.backward(base_source + frozen.operator.first_variation(frozen.m, mu))

    def flux_for(w, mu):
        def flux(k):
            qw = frozen.smoothed_gradient(w[k + 1])
            total = fixed_flux[k] + frozen.m[k][..., None] * frozen.gamma_action(k, qw)
            return to_components(total, dim)
        return flux

    w, mu, its, res = _picard(frozen, np.zeros(grid.shape), z_of, flux_for, tol, relaxation,
                              max_iters, "second-order")
    logger.debug(f"solve_linearized_second converged in {its} iterations (residual {res:.2e})")
    return LinearizedSolution(ScalarField(grid, w, time), ScalarField(grid, mu, time), "second", its, res)


def energy_identity_probe(base: MFGSolution, first: LinearizedSolution) -> float:
    """
    <z(t0), rho(t0)> - sum_k dt [<G dz, m Gamma G dz> + <dF(m^k)(rho^k), rho^k>]

    Zero up to the Picard tolerance on the discrete scheme; a monotone
    coupling makes both subtracted terms non-negative.
    """
    frozen = _Frozen(base)
    dt, vol = frozen.time.dt, frozen.grid.cell_volume
    z, rho = first.z.values, first.rho.values
    pairing = float(np.sum(z[0] * rho[0]) * vol)
    kinetic = 0.0
    for k in range(frozen.time.steps):
        q = frozen.smoothed_gradient(z[k + 1])
        kinetic += float(np.sum(frozen.m[k] * np.sum(q * frozen.gamma_action(k, q), axis=-1)) * vol)
    monotone = float(np.sum(frozen.operator.first_variation(frozen.m[:-1], rho[:-1]) * rho[:-1]) * vol)
    return pairing - dt * (kinetic + monotone)
