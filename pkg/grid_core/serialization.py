"""
Field Serialization Module
Flat little-endian binary with a JSON sidecar, plus CSV export of 1-D slices
"""
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from grid_core.fields import ScalarField
from grid_core.grids import TimeGrid, TorusGrid
from utils.errors import GridError, UnsupportedDimensionError
from utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def save_field(field: ScalarField, path: PathLike) -> Path:
    """
    Write <path>.bin (float64, little endian) and <path>.json

    Args:
        field: Spatial or time-dependent scalar field
        path: Target path without extension

    Returns:
        Path of the binary file
    """
    base = Path(path).with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "dim": field.grid.dim,
        "M": field.grid.points_per_axis,
        "K": field.time.steps if field.time else None,
        "t0": field.time.t0 if field.time else None,
        "T": field.time.horizon_T if field.time else None,
    }
    binary = base.with_suffix(".bin")
    field.values.astype("<f8").tofile(binary)
    base.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=2))
    logger.debug(f"Saved field to {binary}")
    return binary


def load_field(path: PathLike) -> ScalarField:
    """Read a field written by save_field"""
    base = Path(path).with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    grid = TorusGrid(int(meta["dim"]), int(meta["M"]))
    time: Optional[TimeGrid] = None
    shape = grid.shape
    if meta.get("K") is not None:
        time = TimeGrid(float(meta["t0"]), float(meta["T"]), int(meta["K"]))
        shape = (time.node_count,) + shape
    raw = np.fromfile(base.with_suffix(".bin"), dtype="<f8")
    if raw.size != int(np.prod(shape)):
        raise GridError(f"Binary holds {raw.size} values, sidecar implies {int(np.prod(shape))}")
    return ScalarField(grid, raw.reshape(shape), time)


def export_csv_slice(field: ScalarField, path: PathLike, time_index: Optional[int] = None) -> Path:
    """
    Export a 1-D field (or one time slice of it) as x,value rows

    Raises:
        UnsupportedDimensionError: grid dimension other than one
    """
    if field.grid.dim != 1:
        raise UnsupportedDimensionError("CSV export is defined for 1-D slices only")
    values = field.values
    if field.time is not None:
        values = values[-1 if time_index is None else time_index]
    frame = pd.DataFrame({"x": field.grid.coordinates, "value": values})
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format="%.17g")
    return target
