"""
Master Equation Lab - Command Line Entry Point
Runs the experiment sweeps, the Nash solver and the particle simulations.

Exit code is 0 only when every asserted criterion of the run passes.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from config.settings import config
from coupling.problem import CouplingKind, build_problem
from grid_core.grids import TorusGrid
from harness.experiment import KINDS, default_config, load_config
from harness.report import report
from harness.runner import run
from measures.densities import cosine_density
from mfg.solver import solve_mfg
from nash.averaging import nash_gap
from nash.projection import MasterProjector
from nash.solver import memory_estimate, solve_nash
from particles.drifts import mfg_drift, nash_drift, projected_master_drift
from particles.metrics import chaos_metrics, coupled_gap, save_paths
from particles.simulation import simulate
from utils.logger import setup_logger

logger = setup_logger(__name__)

# Subcommand -> experiment kind
SWEEP_COMMANDS = {
    "probe-assumptions": "assumption-probes",
    "sweep-epsilon": "epsilon-stability",
    "sweep-nash": "nash-gap",
    "chaos": "chaos",
    "derivative-check": "derivative-check",
}


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="Experiment file (.toml or .json)")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--out", type=str, help="Output directory")
    parser.add_argument("--workers", type=int, help="Worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfg-lab", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, kind in SWEEP_COMMANDS.items():
        _add_run_flags(sub.add_parser(name, help=f"Run the {kind} experiment"))
    generic = sub.add_parser("run", help="Run any experiment kind")
    generic.add_argument("--kind", choices=KINDS)
    _add_run_flags(generic)

    rep = sub.add_parser("report", help="Summarize the runs in an output directory")
    rep.add_argument("--out", type=str, default=config.OUTPUT_DIR)

    nash = sub.add_parser("nash", help="Nash system tools")
    nash_sub = nash.add_subparsers(dest="action", required=True)
    for action in ("solve", "gap"):
        p = nash_sub.add_parser(action)
        p.add_argument("--n", type=int, default=2, help="Players")
        p.add_argument("--points", type=int, default=32)
        p.add_argument("--epsilon", type=float, default=0.2)
        p.add_argument("--profile", default="default")
        p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
        p.add_argument("--out", type=str, default=config.OUTPUT_DIR)

    particles = sub.add_parser("particles", help="Particle simulations")
    particles_sub = particles.add_subparsers(dest="action", required=True)
    prun = particles_sub.add_parser("run")
    prun.add_argument("--drift", choices=("nash", "master", "mfg-eps", "mfg-local"), default="mfg-local")
    prun.add_argument("--n", type=int, default=3, help="Particles per replica")
    prun.add_argument("--k", type=int, default=64, help="Replicas")
    prun.add_argument("--points", type=int, default=32)
    prun.add_argument("--epsilon", type=float, default=0.2)
    prun.add_argument("--profile", default="default")
    prun.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    prun.add_argument("--out", type=str, default=config.OUTPUT_DIR)
    prun.add_argument("--dump-paths", action="store_true", help="Also write the wrapped paths (.npz)")
    return parser


def run_experiment(kind: Optional[str], args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else default_config(kind)
    if kind and cfg.kind != kind:
        logger.error(f"{args.config} describes a {cfg.kind} experiment, expected {kind}")
        return 2
    cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out, workers=args.workers)
    artifact = run(cfg)
    print(pd.DataFrame([c.__dict__ for c in artifact.criteria]).to_string(index=False))
    print(f"Artifacts: {artifact.directory}")
    return 0 if artifact.passed else 1


def run_nash(args: argparse.Namespace) -> int:
    spec = build_problem(args.profile)
    grid = TorusGrid(1, args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.action == "solve":
        logger.info(f"Nash solve needs about {memory_estimate(args.n, args.points, 2):.1f} MB per slice pair")
        solution = solve_nash(spec, args.n, args.epsilon, grid)
        target = out / f"nash-N{args.n}-M{args.points}-eps{args.epsilon:g}.npz"
        np.savez_compressed(target, values=solution.values[0], stored_nodes=np.array(solution.stored_nodes))
        print(f"v^(N,i)(t0) for N={args.n} written to {target}")
        return 0
    gap = nash_gap(spec, args.n, args.epsilon, 0.0, cosine_density(grid, 0.5), grid, seed=args.seed)
    print(f"N={gap.n_players} eps={gap.epsilon:g} sup_gap={gap.sup_gap:.6e} avg_gap={gap.avg_gap:.6e}")
    return 0


def run_particles(args: argparse.Namespace) -> int:
    spec = build_problem(args.profile)
    grid = TorusGrid(1, args.points)
    m0 = cosine_density(grid, 0.5)
    local = solve_mfg(spec, 0.0, m0, CouplingKind.local())
    if args.drift == "nash":
        nash = solve_nash(spec, args.n, args.epsilon, grid)
        drift, time = nash_drift(nash), nash.time
    elif args.drift == "master":
        drift = projected_master_drift(MasterProjector(spec, args.epsilon, grid), args.n)
        time = local.time
    elif args.drift == "mfg-eps":
        mollified = solve_mfg(spec, 0.0, m0, CouplingKind.mollified(args.epsilon), steps=local.time.steps)
        drift, time = mfg_drift(mollified), local.time
    else:
        drift, time = mfg_drift(local), local.time

    seeds = (args.seed, args.seed + 1)
    ensemble = simulate(drift, m0, args.n, args.k, time, seeds)
    reference = simulate(mfg_drift(local), m0, args.n, args.k, time, seeds)
    gap, stderr = coupled_gap(ensemble, reference)
    metrics = chaos_metrics(ensemble, local.m)

    out = Path(args.out) / f"particles-{args.drift}-N{args.n}-K{args.k}-seed{args.seed}"
    out.mkdir(parents=True, exist_ok=True)
    metrics.curve_frame().to_csv(out / "w1_curve.csv", index=False)
    summary = {**metrics.summary(), "gap_to_local": gap, "gap_stderr": stderr, "drift": drift.label}
    pd.DataFrame([summary]).to_csv(out / "summary.csv", index=False)
    if args.dump_paths:
        save_paths(ensemble, out / "paths.npz")
    print(pd.Series(summary).to_string())
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    if args.command in SWEEP_COMMANDS:
        return run_experiment(SWEEP_COMMANDS[args.command], args)
    if args.command == "run":
        if not args.kind and not args.config:
            logger.error("run needs --kind or --config")
            return 2
        return run_experiment(args.kind, args)
    if args.command == "report":
        summary = report(args.out)
        if summary.empty:
            return 1
        print(summary.to_string(index=False))
        return 0 if bool(summary["passed"].all()) else 1
    if args.command == "nash":
        return run_nash(args)
    return run_particles(args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception as e:
        logger.error(f"Application error: {e}", exc_info=True)
        sys.exit(1)
