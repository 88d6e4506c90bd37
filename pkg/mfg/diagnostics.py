"""
MFG Diagnostics Module
Finite-difference checks of the linearized systems, flow and uniqueness
checks of the solver, and measured regularity / Lipschitz constants of U.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from coupling.problem import CouplingKind, ProblemSpec
from grid_core.fields import ScalarField
from grid_core.grids import TorusGrid
from grid_core.norms import holder_seminorm
from grid_core.operators import gradient_values
from measures.densities import DensityField, cosine_density
from measures.wasserstein import w1_circle
from mfg.linearized import solve_linearized_first, solve_linearized_second
from mfg.solver import MFGSolution, default_steps, solve_mfg
from utils.errors import ParameterError, UnsupportedDimensionError
from utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class DerivativeCheck:
    """Mismatch between a linearized value and its finite-difference quotient per step s"""
    steps: Tuple[float, ...]
    mismatches: Tuple[float, ...]

    @property
    def ratios(self) -> Tuple[float, ...]:
        """Successive mismatch ratios (about 10 for first-order decay over decades)"""
        pairs = zip(self.mismatches, self.mismatches[1:])
        return tuple(a / b if b > 0 else float("inf") for a, b in pairs)


def smooth_perturbation(grid: TorusGrid, seed: int, modes: int = 3) -> ScalarField:
    """Zero-mean trigonometric perturbation with sup norm 1"""
    rng = np.random.default_rng(seed)
    x = grid.points[..., 0]
    values = np.zeros(grid.shape)
    for k in range(1, modes + 1):
        values += rng.normal() / k * np.cos(2.0 * np.pi * k * x + rng.uniform(0.0, 2.0 * np.pi))
    values -= values.mean()
    return ScalarField(grid, values / np.max(np.abs(values)))


def _perturbed(m0: DensityField, rho0: ScalarField, s: float) -> DensityField:
    return DensityField.from_values(m0.grid, m0.values + s * rho0.values)


def _check_steps(s_values: Sequence[float], m0: DensityField, rho0: ScalarField):
    if not s_values:
        raise ParameterError("At least one finite-difference step is required")
    floor = float(np.min(m0.values))
    peak = float(np.max(np.abs(rho0.values)))
    if max(s_values) * peak >= floor:
        raise ParameterError("Largest step makes m0 + s rho0 negative")


def derivative_check(spec: ProblemSpec, t0: float, m0: DensityField, rho0: ScalarField,
                     kind: CouplingKind, s_values: Sequence[float] = (1e-1, 1e-2, 1e-3),
                     tol: float = 1e-11, steps: Optional[int] = None) -> DerivativeCheck:
    """
    sup |z(t0) - [U(t0, ., m0 + s rho0) - U(t0, ., m0)] / s| for each s

    Every quotient re-solves the nonlinear system; tol should sit well below
    the smallest expected mismatch times s.
    """
    _check_steps(s_values, m0, rho0)
    steps = steps or default_steps(m0.grid, spec.horizon - t0, spec.hamiltonian.lipschitz_bound)
    base = solve_mfg(spec, t0, m0, kind, tol, steps)
    first = solve_linearized_first(base, rho0, tol=tol)
    z0 = first.z.values[0]
    u0 = base.u.values[0]
    mismatches = []
    for s in s_values:
        shifted = solve_mfg(spec, t0, _perturbed(m0, rho0, s), kind, tol, steps)
        mismatches.append(float(np.max(np.abs(z0 - (shifted.u.values[0] - u0) / s))))
    check = DerivativeCheck(tuple(float(s) for s in s_values), tuple(mismatches))
    logger.info(f"derivative_check {kind.label}: mismatches {check.mismatches}, ratios {check.ratios}")
    return check


def second_derivative_check(spec: ProblemSpec, t0: float, m0: DensityField, rho0: ScalarField,
                            kind: CouplingKind, s_values: Sequence[float] = (1e-1, 3e-2),
                            tol: float = 1e-11, steps: Optional[int] = None) -> DerivativeCheck:
    """sup |w(t0) - [U(m0 + s rho0) - 2 U(m0) + U(m0 - s rho0)] / s^2| for each s"""
    _check_steps(s_values, m0, rho0)
    steps = steps or default_steps(m0.grid, spec.horizon - t0, spec.hamiltonian.lipschitz_bound)
    base = solve_mfg(spec, t0, m0, kind, tol, steps)
    first = solve_linearized_first(base, rho0, tol=tol)
    second = solve_linearized_second(base, first, tol=tol)
    w0 = second.z.values[0]
    u0 = base.u.values[0]
    mismatches = []
    for s in s_values:
        plus = solve_mfg(spec, t0, _perturbed(m0, rho0, s), kind, tol, steps).u.values[0]
        minus = solve_mfg(spec, t0, _perturbed(m0, rho0, -s), kind, tol, steps).u.values[0]
        mismatches.append(float(np.max(np.abs(w0 - (plus - 2.0 * u0 + minus) / s ** 2))))
    return DerivativeCheck(tuple(float(s) for s in s_values), tuple(mismatches))


def uniqueness_probe(spec: ProblemSpec, t0: float, m0: DensityField, kind: CouplingKind,
                     tol: float = 1e-10, steps: Optional[int] = None, seed: int = 0) -> float:
    """sup |u_a - u_b| for Picard runs started from two different flows"""
    grid = m0.grid
    steps = steps or default_steps(grid, spec.horizon - t0, spec.hamiltonian.lipschitz_bound)
    first = solve_mfg(spec, t0, m0, kind, tol, steps)
    other = cosine_density(grid, 0.8, 2, np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi))
    guess = np.broadcast_to(other.values, first.m.values.shape)
    second = solve_mfg(spec, t0, m0, kind, tol, steps, initial_guess=guess)
    return float(np.max(np.abs(first.u.values - second.u.values)))


def flow_consistency_gap(solution: MFGSolution, t1: float, tol: Optional[float] = None) -> float:
    """
    sup |u(t1, .) - U(t1, ., m(t1))| with U re-evaluated by a fresh solve from (t1, m(t1))

    t1 is snapped to the nearest time node so both solves share dt.
    """
    time = solution.time
    k = time.nearest_node(t1)
    if k >= time.steps:
        return 0.0
    restart = solve_mfg(solution.spec, time.node(k), solution.m.at(k), solution.coupling_kind,
                        tol, time.steps - k, method=solution.method)
    return float(np.max(np.abs(solution.u.values[k] - restart.u.values[0])))


def measure_lipschitz_probe(spec: ProblemSpec, grid: TorusGrid, kind: CouplingKind, t0: float = 0.0,
                            pairs: int = 8, seed: int = 0, tol: Optional[float] = None,
                            steps: Optional[int] = None) -> float:
    """
    max ||U(t0, ., m1) - U(t0, ., m2)||_inf / W1(m1, m2) over random smooth pairs

    Raises:
        UnsupportedDimensionError: grid.dim != 1 (exact W1 needed)
    """
    if grid.dim != 1:
        raise UnsupportedDimensionError("measure_lipschitz_probe uses exact circular W1")
    rng = np.random.default_rng(seed)
    steps = steps or default_steps(grid, spec.horizon - t0, spec.hamiltonian.lipschitz_bound)
    best = 0.0
    for _ in range(pairs):
        m1, m2 = (cosine_density(grid, rng.uniform(0.1, 0.6), int(rng.integers(1, 4)),
                                 rng.uniform(0.0, 2.0 * np.pi)) for _ in range(2))
        dist = w1_circle(m1, m2)
        if dist <= 0.0:
            continue
        u1 = solve_mfg(spec, t0, m1, kind, tol, steps).u.values[0]
        u2 = solve_mfg(spec, t0, m2, kind, tol, steps).u.values[0]
        best = max(best, float(np.max(np.abs(u1 - u2))) / dist)
    logger.info(f"measure_lipschitz_probe {kind.label}: {best:.4f} over {pairs} pairs")
    return best


def regularity_diagnostics(solution: MFGSolution, alpha: float = 0.5) -> Dict[str, float]:
    """
    Measured regularity of a solution

    Returns:
        sup_t Hoelder seminorm of m(t), sup |Du|, sup |u| and the Picard residual
    """
    grid = solution.grid
    m = solution.m.values
    holder: List[float] = [holder_seminorm(m[k], grid, alpha) for k in range(m.shape[0])]
    grad = gradient_values(solution.u.values, grid.dim, grid.spacing)
    return {
        "m_holder": float(max(holder)),
        "du_sup": float(np.max(np.abs(grad))),
        "u_sup": float(np.max(np.abs(solution.u.values))),
        "residual": solution.fixed_point_residual,
    }
