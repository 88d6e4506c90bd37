"""
Report Module
Summary of every run manifest found under an output directory.
"""
import json
from pathlib import Path
from typing import Optional, Union

import pandas as pd

from harness.runner import MANIFEST_FILE
from utils.logger import setup_logger

logger = setup_logger(__name__)

SUMMARY_FILE = "summary.csv"


def collect(output_dir: Union[str, Path]) -> pd.DataFrame:
    """One row per criterion of every run (empty frame when nothing ran yet)"""
    rows = []
    for manifest_path in sorted(Path(output_dir).glob(f"*/{MANIFEST_FILE}")):
        try:
            manifest = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Skipping unreadable manifest {manifest_path}: {e}")
            continue
        for criterion in manifest.get("criteria", []):
            rows.append({
                "run": manifest_path.parent.name,
                "kind": manifest.get("kind"),
                "criterion": criterion["name"],
                "value": criterion["value"],
                "threshold": criterion["threshold"],
                "passed": criterion["passed"],
                "failed_cells": manifest.get("failed_cells", 0),
            })
    return pd.DataFrame(rows, columns=["run", "kind", "criterion", "value", "threshold", "passed", "failed_cells"])


def report(output_dir: Union[str, Path], out_file: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """
    Aggregate manifests into summary.csv next to the runs

    Returns:
        The summary table
    """
    summary = collect(output_dir)
    target = Path(out_file) if out_file else Path(output_dir) / SUMMARY_FILE
    if summary.empty:
        logger.warning(f"No run manifests under {output_dir}")
        return summary
    target.parent.mkdir(parents=True, exist_ok=True)
    summary.to_csv(target, index=False)
    passed = int(summary["passed"].sum())
    logger.info(f"Report: {passed}/{len(summary)} criteria passed across {summary['run'].nunique()} runs")
    return summary
