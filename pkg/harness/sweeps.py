"""
Sweep Definitions Module
Cells of every experiment kind, the handler that computes one table row per
cell, and the acceptance criteria evaluated on the finished table.

Handlers are plain module-level functions so a process pool can pickle them.
"""
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List

import numpy as np
import pandas as pd

from coupling.mollifier import monotonicity_probe
from coupling.probes import assumption_report, closeness_probe, regularity_probe
from coupling.problem import CouplingKind
from grid_core.fields import ScalarField, VectorField
from grid_core.grids import TimeGrid, TorusGrid
from grid_core.operators import central_difference
from harness.experiment import ExperimentConfig
from harness.rates import fit_rate
from measures.densities import cosine_density
from mfg.diagnostics import derivative_check, second_derivative_check, smooth_perturbation
from mfg.linearized import energy_identity_probe, solve_linearized_first
from mfg.solver import solve_mfg
from mfg.stability import stability_gap
from nash.averaging import nash_gap
from nash.projection import MasterProjector
from nash.residuals import residual_probe, sobol_sample_points
from nash.solver import exchangeability_defect, relabeling_defect, solve_nash
from particles.drifts import mfg_drift, nash_drift
from particles.metrics import chaos_metrics, coupled_gap, empirical_w1, gronwall_envelope, measure_drift_gap
from particles.simulation import simulate
from pde_engines.fokker_planck import adjoint_consistency_check
from pde_engines.parabolic import ParabolicProblem, solve_parabolic
from utils.errors import ConfigurationError, MaximumPrincipleViolation, ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

Row = Dict[str, Any]

SYMMETRY_SAMPLES = 100


@dataclass(frozen=True)
class Cell:
    index: int
    params: Dict[str, Any]


@dataclass(frozen=True)
class Criterion:
    name: str
    value: float
    threshold: str
    passed: bool


def _grid(cfg: ExperimentConfig, points: int = None) -> TorusGrid:
    return TorusGrid(cfg.dim, points or cfg.points)


def _initial(grid: TorusGrid):
    return cosine_density(grid, 0.5, 1)


def plan_cells(cfg: ExperimentConfig) -> List[Cell]:
    """Sweep cells in table order"""
    kind = cfg.kind
    if kind in ("closeness-scaling", "epsilon-stability"):
        params = [{"epsilon": e} for e in cfg.epsilons]
    elif kind in ("assumption-probes", "monotonicity", "derivative-check", "energy-identity"):
        params = [{"seed": s} for s in cfg.seed_list()]
    elif kind in ("nash-gap", "chaos", "empirical-rate"):
        params = [{"players": n} for n in cfg.players]
    elif kind == "parabolic-order":
        m = cfg.points
        params = [{"ladder": "dt", "points": 4 * m, "steps": k} for k in (4 * m, 8 * m, 16 * m)]
        params += [{"ladder": "h", "points": p, "steps": p * p} for p in (16, 32, 64)]
        params += [{"ladder": "h-monotone", "points": p, "steps": p * p} for p in (16, 32, 64)]
        params.append({"ladder": "maximum-principle", "points": m, "steps": m})
    else:
        raise ConfigurationError(f"No sweep defined for '{kind}'")
    return [Cell(i, p) for i, p in enumerate(params)]


def handle_assumption_probes(cfg: ExperimentConfig, seed: int) -> Row:
    spec = cfg.problem_spec()
    grid = _grid(cfg)
    report = assumption_report(spec.hamiltonian, spec.coupling, grid, seed=seed)
    row = {f"hamiltonian_{k}": v for k, v in report["hamiltonian"].items()}
    row.update({f"coupling_{k}": v for k, v in report["coupling"].items()})
    for eps in cfg.epsilons:
        row[f"regularity_{eps:g}"] = regularity_probe(spec.mollified(grid, eps), 0.5)
    return row


def handle_closeness_scaling(cfg: ExperimentConfig, epsilon: float) -> Row:
    spec = cfg.problem_spec()
    fc = spec.mollified(_grid(cfg), epsilon)
    radius = cfg.threshold("R", 5.0)
    alpha = cfg.threshold("alpha", 1.0)
    return {"closeness": closeness_probe(fc, radius, alpha, cfg.samples, cfg.seed), "R": radius, "alpha": alpha}


def handle_monotonicity(cfg: ExperimentConfig, seed: int) -> Row:
    spec = cfg.problem_spec()
    grid = _grid(cfg)
    rng = np.random.default_rng(seed)
    m1, m2 = (cosine_density(grid, rng.uniform(0.05, 0.9), int(rng.integers(1, 6)),
                             rng.uniform(0.0, 2.0 * np.pi)) for _ in range(2))
    pairings = [monotonicity_probe(spec.mollified(grid, eps), m1, m2) for eps in cfg.epsilons]
    return {"min_pairing": float(min(pairings))}


def handle_epsilon_stability(cfg: ExperimentConfig, epsilon: float) -> Row:
    spec = cfg.problem_spec()
    grid = _grid(cfg)
    report = stability_gap(spec, cfg.t0, _initial(grid), epsilon, cfg.tolerance, cfg.steps)
    return report.to_dict()


def handle_derivative_check(cfg: ExperimentConfig, seed: int) -> Row:
    spec = cfg.problem_spec()
    grid = _grid(cfg)
    kind = CouplingKind.mollified(cfg.epsilons[0])
    rho0 = smooth_perturbation(grid, seed)
    tol = cfg.tolerance or 1e-11
    first = derivative_check(spec, cfg.t0, _initial(grid), rho0, kind, tol=tol, steps=cfg.steps)
    row: Row = {}
    for j, (s, mismatch) in enumerate(zip(first.steps, first.mismatches)):
        row[f"s_{j}"] = s
        row[f"mismatch_{j}"] = mismatch
    for j, ratio in enumerate(first.ratios):
        row[f"ratio_{j}"] = ratio
    if cfg.threshold("second_order", 1.0) > 0:
        second = second_derivative_check(spec, cfg.t0, _initial(grid), rho0, kind, tol=tol, steps=cfg.steps)
        for j, mismatch in enumerate(second.mismatches):
            row[f"second_mismatch_{j}"] = mismatch
    return row


def handle_energy_identity(cfg: ExperimentConfig, seed: int) -> Row:
    spec = cfg.problem_spec()
    grid = _grid(cfg)
    base = solve_mfg(spec, cfg.t0, _initial(grid), CouplingKind.mollified(cfg.epsilons[0]),
                     cfg.tolerance, cfg.steps)
    first = solve_linearized_first(base, smooth_perturbation(grid, seed), tol=cfg.tolerance)
    rng = np.random.default_rng(seed)
    x = grid.points[..., 0]
    velocity = VectorField(grid, (0.5 * np.sin(2.0 * np.pi * x + rng.uniform(0.0, 2.0 * np.pi)))[None])
    adjoint = adjoint_consistency_check(velocity, steps=cfg.steps or 100, seed=seed)
    return {"energy_identity": energy_identity_probe(base, first), "adjoint_defect": adjoint}


def handle_nash_gap(cfg: ExperimentConfig, players: int) -> Row:
    spec = cfg.problem_spec()
    grid = TorusGrid(1, cfg.points)
    eps = cfg.epsilon_for(players)
    projector = MasterProjector(spec, eps, grid, tol=cfg.tolerance)
    m0 = _initial(grid)
    solution = solve_nash(spec, players, eps, grid, cfg.t0, cfg.steps)
    gap = nash_gap(spec, players, eps, cfg.t0, m0, grid, cfg.samples, cfg.seed,
                   cfg.steps, projector, solution)
    points = sobol_sample_points(players, grid, cfg.samples, cfg.seed, spec.horizon, cfg.t0)
    diagnostics = residual_probe(spec, players, eps, points, projector, t0=cfg.t0)
    row = {
        "epsilon": eps,
        "sup_gap": gap.sup_gap,
        "avg_gap": gap.avg_gap,
        "solves": projector.solves,
        "exchangeability_defect": exchangeability_defect(solution, SYMMETRY_SAMPLES, cfg.seed),
        "relabeling_defect": relabeling_defect(solution, SYMMETRY_SAMPLES, cfg.seed),
        "n_beta": players * diagnostics.beta_N,
    }
    row.update({k: v for k, v in diagnostics.to_dict().items() if k != "n_players"})
    return row


def _feedback_lipschitz(solution) -> float:
    feedback = solution.feedback()[:, 0]
    return float(np.max(np.abs(central_difference(feedback, 1, solution.grid.spacing))))


def handle_chaos(cfg: ExperimentConfig, players: int) -> Row:
    spec = cfg.problem_spec()
    grid = TorusGrid(1, cfg.points)
    eps = cfg.epsilon_for(players)
    m0 = _initial(grid)
    nash = solve_nash(spec, players, eps, grid, cfg.t0, cfg.steps)
    local = solve_mfg(spec, cfg.t0, m0, CouplingKind.local(), cfg.tolerance, cfg.steps)
    seeds = (cfg.seed, cfg.seed + 1)
    d_nash, d_local = nash_drift(nash), mfg_drift(local)

    y = simulate(d_nash, m0, players, cfg.replicas, nash.time, seeds)
    x_tilde = simulate(d_local, m0, players, cfg.replicas, nash.time, seeds)
    gap, stderr = coupled_gap(y, x_tilde)
    eta = measure_drift_gap(d_nash, d_local, y)
    lipschitz = _feedback_lipschitz(local)
    envelope = gronwall_envelope(eta, lipschitz, spec.horizon - cfg.t0)
    report = chaos_metrics(x_tilde, local.m)
    return {
        "epsilon": eps,
        "gap": gap,
        "gap_stderr": stderr,
        "eta": eta,
        "lipschitz": lipschitz,
        "envelope": envelope,
        **report.summary(),
    }


def handle_empirical_rate(cfg: ExperimentConfig, players: int) -> Row:
    mean, stderr = empirical_w1(players, cfg.samples, cfg.seed, TorusGrid(1, cfg.points))
    return {"w1": mean, "w1_stderr": stderr}


def _parabolic_error(points: int, steps: int, stencil: str, velocity: float, viscosity: float = 0.0) -> float:
    """Backward -d_t w - Lap w + c d_x w = f with exact w = exp(t - 1) (1 + sin(2 pi x))"""
    grid = TorusGrid(1, points)
    time = TimeGrid(0.0, 1.0, steps)
    x = grid.points[..., 0]
    t = time.nodes[:, None]
    k = 2.0 * np.pi
    exact = np.exp(t - 1.0) * (1.0 + np.sin(k * x))
    source = np.exp(t - 1.0) * ((k * k - 1.0) * np.sin(k * x) - 1.0 + velocity * k * np.cos(k * x))
    drift = VectorField(grid, np.full((1,) + grid.shape, velocity))
    problem = ParabolicProblem("backward", time, ScalarField(grid, exact[-1]), drift,
                               ScalarField(grid, source, time), viscosity, stencil)
    w = solve_parabolic(problem)
    return float(np.max(np.abs(w.values[0] - exact[0])))


def handle_parabolic_order(cfg: ExperimentConfig, ladder: str, points: int, steps: int) -> Row:
    if ladder == "maximum-principle":
        grid = TorusGrid(1, points)
        rng = np.random.default_rng(cfg.seed)
        drift = VectorField(grid, 0.8 * np.sin(2.0 * np.pi * grid.points[..., 0])[None])
        try:
            solve_parabolic(ParabolicProblem("backward", TimeGrid(0.0, 1.0, steps),
                                             ScalarField(grid, rng.uniform(-1.0, 1.0, grid.shape)), drift))
            return {"error": 0.0, "maximum_principle": True}
        except MaximumPrincipleViolation:
            return {"error": math.nan, "maximum_principle": False}
    if ladder == "h-monotone":
        sigma = float(cfg.problem_spec().hamiltonian.lipschitz_bound)
        return {"error": _parabolic_error(points, steps, "upwind", 0.5, sigma), "maximum_principle": True}
    return {"error": _parabolic_error(points, steps, "central", 0.5), "maximum_principle": True}


HANDLERS: Dict[str, Callable[..., Row]] = {
    "assumption-probes": handle_assumption_probes,
    "closeness-scaling": handle_closeness_scaling,
    "monotonicity": handle_monotonicity,
    "epsilon-stability": handle_epsilon_stability,
    "derivative-check": handle_derivative_check,
    "energy-identity": handle_energy_identity,
    "nash-gap": handle_nash_gap,
    "chaos": handle_chaos,
    "empirical-rate": handle_empirical_rate,
    "parabolic-order": handle_parabolic_order,
}


def run_cell(cfg: ExperimentConfig, cell: Cell) -> Row:
    """One table row; failures become rows with an error tag"""
    row: Row = {"cell": cell.index, **cell.params}
    try:
        row.update(HANDLERS[cfg.kind](cfg, **cell.params))
        row["status"] = "ok"
    except Exception as e:
        logger.error(f"{cfg.kind} cell {cell.index} {cell.params} failed: {e}", exc_info=True)
        row["status"] = "error"
        row["error_type"] = type(e).__name__
        row["error_message"] = str(e)
    return row


# Criteria


def _criterion(name: str, value: float, threshold: str, passed: bool) -> Criterion:
    return Criterion(name, float(value), threshold, bool(passed))


def _non_increasing(values, slack) -> bool:
    """Each entry at most the previous one plus its slack"""
    values = list(values)
    slack = list(slack) if np.ndim(slack) else [slack] * len(values)
    return all(b <= a + s for a, b, s in zip(values, values[1:], slack[1:]))


def _growth(values) -> float:
    """Largest value over the first one; 0 when all vanish"""
    values = np.asarray(values, dtype=np.float64)
    if values[0] > 0.0:
        return float(np.max(values) / values[0])
    return 0.0 if np.all(values == 0.0) else math.inf


def _all_ok(table: pd.DataFrame) -> Criterion:
    failed = int((table["status"] != "ok").sum())
    return _criterion("cells_ok", len(table) - failed, f"== {len(table)}", failed == 0)


def evaluate_criteria(cfg: ExperimentConfig, table: pd.DataFrame) -> List[Criterion]:
    """
    Acceptance checks of the kind on its table

    Criteria that cannot be computed from the surviving rows (too few points
    for a fit, missing columns) are reported as one failed "evaluable" entry.
    """
    out = [_all_ok(table)]
    ok = table[table["status"] == "ok"]
    if not ok.empty:
        try:
            out.extend(_kind_criteria(cfg, ok))
        except (ParameterError, KeyError) as e:
            logger.warning(f"{cfg.kind}: criteria not computable from {len(ok)} rows: {e}")
            out.append(_criterion("evaluable", 0.0, "== 1", False))
    for c in out:
        logger.info(f"criterion {c.name}: {c.value:.4g} ({c.threshold}) {'PASS' if c.passed else 'FAIL'}")
    return out


def _kind_criteria(cfg: ExperimentConfig, ok: pd.DataFrame) -> List[Criterion]:
    out: List[Criterion] = []
    kind = cfg.kind
    th = cfg.threshold

    if kind == "assumption-probes":
        passed = bool(ok["hamiltonian_passed"].all() and ok["coupling_passed"].all())
        out.append(_criterion("assumptions_hold", float(passed), "== 1", passed))

    elif kind == "closeness-scaling":
        fit = fit_rate(ok["epsilon"], ok["closeness"])
        low, high, r2_min = th("slope_min", 0.8), th("slope_max", 1.2), th("r2_min", 0.95)
        out.append(_criterion("closeness_slope", fit.slope, f"[{low:g}, {high:g}]", fit.within(low, high)))
        out.append(_criterion("closeness_r2", fit.r2, f">= {r2_min:g}", fit.r2 >= r2_min))

    elif kind == "monotonicity":
        worst = float(ok["min_pairing"].min())
        low = th("pairing_min", -1e-10)
        out.append(_criterion("min_pairing", worst, f">= {low:g}", worst >= low))

    elif kind == "epsilon-stability":
        m_fit = fit_rate(ok["epsilon"], ok["m_gap_L2"])
        u_fit = fit_rate(ok["epsilon"], ok["sup_u_gap"])
        m_low, m_high = th("m_slope_min", 0.7), th("m_slope_max", 1.3)
        out.append(_criterion("m_gap_slope", m_fit.slope, f"[{m_low:g}, {m_high:g}]",
                              m_fit.within(m_low, m_high)))
        u_low = th("u_slope_min", 0.47)
        out.append(_criterion("sup_u_slope", u_fit.slope, f">= {u_low:g}", u_fit.slope >= u_low))

    elif kind == "derivative-check":
        ratios = ok[[c for c in ok.columns if c.startswith("ratio_")]].to_numpy().ravel()
        low, high = th("ratio_min", 5.0), th("ratio_max", 20.0)
        passed = bool(np.all((ratios >= low) & (ratios <= high)))
        out.append(_criterion("min_ratio", float(np.min(ratios)), f"[{low:g}, {high:g}]", passed))
        second = [c for c in ok.columns if c.startswith("second_mismatch_")]
        if len(second) >= 2:
            values = ok[second].to_numpy()
            decays = bool(np.all(values[:, -1] < values[:, 0]))
            out.append(_criterion("second_order_decay", float(np.max(values[:, -1] / values[:, 0])),
                                  "< 1", decays))

    elif kind == "energy-identity":
        worst = float(ok["energy_identity"].min())
        defect = float(ok["adjoint_defect"].max())
        low, high = th("energy_min", -1e-6), th("adjoint_max", 1e-8)
        out.append(_criterion("energy_identity_min", worst, f">= {low:g}", worst >= low))
        out.append(_criterion("adjoint_defect_max", defect, f"<= {high:g}", defect <= high))

    elif kind == "nash-gap":
        ordered = ok.sort_values("players")
        slack = th("trend_slack", 0.1)
        for column in ("sup_gap", "r_N"):
            values = ordered[column].to_numpy()
            out.append(_criterion(f"{column}_trend", float(values[-1] - values[0]), "non-increasing",
                                  _non_increasing(values, slack * values)))
        symmetry = float(max(ok["exchangeability_defect"].max(), ok["relabeling_defect"].max()))
        sym_max = th("symmetry_max", 1e-8)
        out.append(_criterion("symmetry_defect", symmetry, f"<= {sym_max:g}", symmetry <= sym_max))
        growth = _growth(ordered["n_beta"].to_numpy())
        growth_max = th("n_beta_growth_max", 1.5)
        out.append(_criterion("n_beta_growth", growth, f"<= {growth_max:g}", growth <= growth_max))
        if cfg.beta is not None:
            values = ordered["avg_gap"].to_numpy()
            out.append(_criterion("avg_gap_trend", float(values[-1] - values[0]), "decreasing",
                                  values[-1] < values[0]))

    elif kind == "chaos":
        ordered = ok.sort_values("players")
        gaps = ordered["gap"].to_numpy()
        errs = ordered["gap_stderr"].to_numpy()
        out.append(_criterion("gap_trend", float(gaps[-1] - gaps[0]), "non-increasing",
                              _non_increasing(gaps, 3.0 * errs)))
        margin = ordered["envelope"] + 3.0 * ordered["gap_stderr"] - ordered["gap"]
        out.append(_criterion("below_envelope", float(margin.min()), ">= 0", bool((margin >= 0).all())))
        z = (ordered["correlation"].abs() / ordered["correlation_sigma"]).max()
        out.append(_criterion("correlation_sigmas", float(z), "<= 3", bool(z <= 3.0)))

    elif kind == "empirical-rate":
        fit = fit_rate(ok["players"], ok["w1"])
        low, high = th("slope_min", -0.6), th("slope_max", -0.4)
        out.append(_criterion("w1_slope", fit.slope, f"[{low:g}, {high:g}]", fit.within(low, high)))

    elif kind == "parabolic-order":
        r2_min = th("r2_min", 0.98)
        ladders = (("dt", "steps", "dt_order", 0.9), ("h", "points", "h_order", 1.9),
                   ("h-monotone", "points", "h_monotone_order", 0.9))
        for ladder, axis, name, default in ladders:
            rows = ok[ok["ladder"] == ladder]
            fit = fit_rate(1.0 / rows[axis], rows["error"])
            low = th(f"{name}_min", default)
            out.append(_criterion(name, fit.slope, f">= {low:g}, r2 >= {r2_min:g}",
                                  fit.slope >= low and fit.r2 >= r2_min))
        monotone = bool(ok["maximum_principle"].all())
        out.append(_criterion("maximum_principle", float(monotone), "== 1", monotone))
    return out


def criteria_rows(criteria: List[Criterion]) -> List[Dict[str, Any]]:
    return [asdict(c) for c in criteria]
