"""
Assumption Probes Module
Sampled checks of the structural assumptions on (H, F, G) and empirical
estimates of the mollified-coupling constants (closeness to F, regularity).
All probes are sup-over-samples lower bounds with explicit seeds.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from coupling.hamiltonian import HamiltonianSpec
from coupling.local import LocalCoupling
from coupling.mollifier import MollifiedCoupling
from grid_core.grids import TorusGrid
from grid_core.norms import holder_seminorm
from grid_core.operators import central_difference, second_difference
from measures.densities import DensityField, cosine_density
from utils.errors import ParameterError, SamplerError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def _check_exponent(alpha: float):
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"Exponent must lie in (0, 1], got {alpha}")


def probe_densities(grid: TorusGrid, R: float, alpha: float, samples: int, seed: int) -> List[DensityField]:
    """
    Random trigonometric densities with discrete C^alpha norm at most R

    Sample s uses frequency 1 + s mod k_max (k_max = min(M/4, 32)) with a
    random phase; samples past the first k_max add a second mode on the last
    axis. Amplitudes are scaled to saturate the norm bound while staying
    positive.
    """
    rng = np.random.default_rng(seed)
    k_max = max(1, min(grid.points_per_axis // 4, 32))
    x_first = grid.points[..., 0]
    x_last = grid.points[..., -1]
    out: List[DensityField] = []
    if R >= 1.0:
        out.append(DensityField.uniform(grid))
    for s in range(samples):
        k = 1 + s % k_max
        profile = np.cos(2.0 * np.pi * k * x_first + rng.uniform(0.0, 2.0 * np.pi))
        if s >= k_max:
            k2 = 1 + int(rng.integers(k_max))
            profile = profile + 0.5 * np.cos(2.0 * np.pi * k2 * x_last + rng.uniform(0.0, 2.0 * np.pi))
        peak = float(np.max(np.abs(profile)))
        semi = holder_seminorm(profile, grid, alpha)
        amp = min((R - 1.0) / (peak + semi), 0.9 / peak)
        if amp <= 0.0:
            continue
        density = DensityField.from_values(grid, 1.0 + amp * profile, normalize=True)
        norm = float(np.max(np.abs(density.values))) + holder_seminorm(density.values, grid, alpha)
        if norm <= R * (1.0 + 1e-9):
            out.append(density)
    return out


def closeness_probe(fc: MollifiedCoupling, R: float, alpha: float, samples: int, seed: int = 0) -> float:
    """
    Empirical lower bound of sup ||F^eps(., m) - F(., m(.))||_inf over ||m||_{C^alpha} <= R

    Args:
        fc: Mollified coupling
        R: Norm bound of the sampled densities
        alpha: Hoelder exponent in (0, 1]
        samples: Number of random densities (>= 1)
        seed: Sampler seed

    Raises:
        SamplerError: no sampled density satisfies the norm bound
    """
    _check_exponent(alpha)
    if samples < 1:
        raise ParameterError("closeness_probe needs at least one sample")
    densities = probe_densities(fc.grid, R, alpha, samples, seed)
    if not densities:
        raise SamplerError(f"No density with C^{alpha} norm <= {R} was generated")
    points = fc.grid.points
    best = 0.0
    for m in densities:
        local = fc.base.value(points, m.values) * np.ones(m.values.shape)
        best = max(best, float(np.max(np.abs(fc.evaluate(m.values) - local))))
    logger.debug(f"closeness_probe eps={fc.epsilon:g} R={R} -> {best:.3e} over {len(densities)} densities")
    return best


def _regularity_densities(grid: TorusGrid) -> List[DensityField]:
    m = grid.points_per_axis
    spike_nodes = [(0,) * grid.dim, (m // 3,) * grid.dim]
    out = [DensityField.uniform(grid)]
    out += [DensityField.point_mass(grid, node) for node in spike_nodes]
    out += [cosine_density(grid, 0.5, k) for k in (1, 2, 4)]
    return out


def c4_norm(values: np.ndarray, grid: TorusGrid, alpha: float) -> float:
    """sum_{j<=4} max_a ||d_a^j f||_inf + max_a [d_a^4 f]_alpha with repeated differences"""
    h = grid.spacing
    derivatives = 0.0
    top_semi = 0.0
    for axis in grid.axes:
        d1 = central_difference(values, axis, h)
        d2 = second_difference(values, axis, h)
        d3 = central_difference(d2, axis, h)
        d4 = second_difference(d2, axis, h)
        derivatives = max(derivatives, float(sum(np.max(np.abs(d)) for d in (d1, d2, d3, d4))))
        top_semi = max(top_semi, holder_seminorm(d4, grid, alpha))
    return float(np.max(np.abs(values))) + derivatives + top_semi


def regularity_probe(fc: MollifiedCoupling, alpha: float,
                     densities: Optional[Sequence[DensityField]] = None) -> float:
    """
    Discrete C^{4+alpha} norm of x -> F^eps(x, m), maximized over sampled m

    The default sample set holds the uniform density, one-cell spikes and
    cosine densities; spikes drive the growth as eps decreases.
    """
    _check_exponent(alpha)
    densities = list(densities) if densities is not None else _regularity_densities(fc.grid)
    return max(c4_norm(fc.evaluate(m.values), fc.grid, alpha) for m in densities)


@dataclass(frozen=True)
class HamiltonianCheck:
    max_gradient_norm: float
    lipschitz_bound: float
    min_hessian_eigenvalue: float
    max_hessian_asymmetry: float
    fd_order: float
    passed: bool


def check_hamiltonian(ham: HamiltonianSpec, dim: int = 1, samples: int = 2000,
                      radius: float = 50.0, seed: int = 0) -> HamiltonianCheck:
    """
    Sample (x, p) with |p| <= radius and test the Lipschitz bound, convexity
    and finite-difference consistency of D_p H (second-order remainder).
    """
    rng = np.random.default_rng(seed)
    x = rng.random((samples, dim))
    direction = rng.normal(size=(samples, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    p = direction * (radius * rng.random((samples, 1)) ** (1.0 / dim))

    grad = ham.gradient_p(x, p)
    max_grad = float(np.max(np.linalg.norm(grad, axis=1)))
    hess = ham.hessian_p(x, p)
    asym = float(np.max(np.abs(hess - np.swapaxes(hess, -1, -2))))
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (hess + np.swapaxes(hess, -1, -2)))))

    e = rng.normal(size=(samples, dim))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    errs = []
    for step in (1e-2, 5e-3):
        rem = ham.value(x, p + step * e) - ham.value(x, p) - step * np.sum(grad * e, axis=1)
        errs.append(float(np.max(np.abs(rem))))
    fd_order = float(np.log2(errs[0] / errs[1])) if errs[1] > 0 else float("inf")

    passed = max_grad <= ham.lipschitz_bound + 1e-12 and min_eig > 0.0 and asym < 1e-12 and fd_order > 1.8
    result = HamiltonianCheck(max_grad, ham.lipschitz_bound, min_eig, asym, fd_order, passed)
    if not passed:
        logger.warning(f"Hamiltonian {ham.name} failed assumption checks: {result}")
    return result


@dataclass(frozen=True)
class CouplingCheck:
    min_dm: float
    delta: float
    fd_error: float
    terminal_c2: float
    passed: bool


def check_local_coupling(coupling: LocalCoupling, grid: TorusGrid, samples: int = 2000,
                         max_density: float = 10.0, seed: int = 0) -> CouplingCheck:
    """dF/dm >= delta on sampled (x, m), consistency of dF/dm, finite C^2 norm of G"""
    rng = np.random.default_rng(seed)
    x = rng.random((samples, grid.dim))
    m = max_density * rng.random(samples)
    dm = coupling.dm(x, m) * np.ones(samples)
    min_dm = float(np.min(dm))
    step = 1e-6
    fd = (coupling.value(x, m + step) - coupling.value(x, m - step)) / (2.0 * step)
    fd_error = float(np.max(np.abs(fd - dm)))

    g = coupling.terminal_values(grid)
    h = grid.spacing
    c2 = float(np.max(np.abs(g)))
    for axis in grid.axes:
        c2 += float(np.max(np.abs(central_difference(g, axis, h))))
        c2 += float(np.max(np.abs(second_difference(g, axis, h))))

    passed = min_dm >= coupling.delta - 1e-12 and fd_error < 1e-5 and np.isfinite(c2)
    return CouplingCheck(min_dm, coupling.delta, fd_error, c2, bool(passed))


def assumption_report(ham: HamiltonianSpec, coupling: LocalCoupling, grid: TorusGrid,
                      seed: int = 0) -> Dict[str, Dict[str, float]]:
    """Both checks as plain dictionaries (rows of the probe table)"""
    return {
        "hamiltonian": asdict(check_hamiltonian(ham, grid.dim, seed=seed)),
        "coupling": asdict(check_local_coupling(coupling, grid, seed=seed)),
    }
