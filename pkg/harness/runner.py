"""
Experiment Runner Module
Executes the cells of an experiment (optionally in a process pool), writes
table.csv, criteria.csv, config.json and manifest.json under
<output_dir>/<kind>-<hash12>/ and returns a RunArtifact handle.

Table bytes depend only on the configuration content: rows are ordered by
cell index and timings live in the manifest, never in the table.
"""
import hashlib
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from config.settings import config
from harness.experiment import ExperimentConfig
from harness.sweeps import Cell, Criterion, criteria_rows, evaluate_criteria, plan_cells, run_cell
from utils.errors import IntegrityError
from utils.logger import setup_logger

logger = setup_logger(__name__)

TABLE_FILE = "table.csv"
CRITERIA_FILE = "criteria.csv"
CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"
FLOAT_FORMAT = "%.12e"


@dataclass(frozen=True)
class RunArtifact:
    """Handle of a finished run"""
    directory: Path
    config_hash: str
    content_hash: str
    table: pd.DataFrame
    criteria: Tuple[Criterion, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def table_path(self) -> Path:
        return self.directory / TABLE_FILE

    @property
    def manifest_path(self) -> Path:
        return self.directory / MANIFEST_FILE


def _timed_cell(cfg: ExperimentConfig, cell: Cell) -> Tuple[Dict[str, Any], float]:
    start = time.perf_counter()
    row = run_cell(cfg, cell)
    return row, time.perf_counter() - start


def execute(cfg: ExperimentConfig) -> Tuple[List[Dict[str, Any]], List[float]]:
    """Rows and wall times of all cells, in cell order"""
    cells = plan_cells(cfg)
    logger.info(f"Running {cfg.kind} with {len(cells)} cells on {cfg.workers} worker(s)")
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cells))) as pool:
            results = list(pool.map(_timed_cell, [cfg] * len(cells), cells))
    else:
        results = [_timed_cell(cfg, cell) for cell in cells]
    rows = [r for r, _ in results]
    timings = [t for _, t in results]
    return rows, timings


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, default=_json_default)


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def prepare_directory(cfg: ExperimentConfig) -> Path:
    """
    Create (or reuse) the run directory

    Raises:
        IntegrityError: the directory holds a different configuration under this hash
        OSError: the output directory is not writable
    """
    directory = Path(cfg.output_dir) / cfg.run_name
    stored = directory / CONFIG_FILE
    if stored.exists():
        previous = json.loads(stored.read_text())
        if previous != json.loads(_canonical(cfg.content())):
            raise IntegrityError(f"{directory} already holds a different configuration with hash {cfg.config_hash}")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def run(cfg: ExperimentConfig) -> RunArtifact:
    """
    Execute an experiment and persist its artifacts

    Failed cells are recorded as rows with status "error" and never abort
    their siblings; criteria are evaluated on the successful rows.

    Returns:
        RunArtifact
    """
    directory = prepare_directory(cfg)
    (directory / CONFIG_FILE).write_text(_canonical(cfg.content()))

    started = datetime.now(timezone.utc)
    rows, timings = execute(cfg)
    table = pd.DataFrame(rows).sort_values("cell", kind="stable").reset_index(drop=True)
    table.to_csv(directory / TABLE_FILE, index=False, float_format=FLOAT_FORMAT)

    criteria = tuple(evaluate_criteria(cfg, table))
    pd.DataFrame(criteria_rows(list(criteria))).to_csv(directory / CRITERIA_FILE, index=False,
                                                       float_format=FLOAT_FORMAT)
    content_hash = hashlib.sha256((directory / TABLE_FILE).read_bytes()).hexdigest()

    manifest = {
        "kind": cfg.kind,
        "config_hash": cfg.config_hash,
        "content_hash": content_hash,
        "started": started.isoformat(),
        "cells": len(rows),
        "failed_cells": int((table["status"] != "ok").sum()),
        "timings_seconds": timings,
        "seeds": list(cfg.seed_list()),
        "solver_defaults": config.solver_defaults(),
        "criteria": criteria_rows(list(criteria)),
        "passed": all(c.passed for c in criteria),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (directory / MANIFEST_FILE).write_text(_canonical(manifest))
    logger.info(f"{cfg.kind} finished in {sum(timings):.1f}s: {'PASS' if manifest['passed'] else 'FAIL'} "
                f"({directory})")
    return RunArtifact(directory, cfg.config_hash, content_hash, table, criteria)
