"""
Empirical Measures Module
Uniform atomic measures, including m^{N,i} = 1/(N-1) sum_{j != i} delta_{x_j}
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from utils.errors import ParameterError, UndefinedMeasureError


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"Points must have shape (n, d), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("Points must be finite")
    return np.mod(arr, 1.0)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """
    Equal-weight atoms on the torus

    Attributes:
        atoms: (n, d) positions in [0, 1)^d
        excluded_index: index (0-based, in the original list) of the removed point, if any
        original_count: length of the list the measure was built from
    """
    atoms: np.ndarray
    excluded_index: Optional[int] = None
    original_count: Optional[int] = None

    def __post_init__(self):
        arr = _as_points(self.atoms)
        if arr.shape[0] == 0:
            raise UndefinedMeasureError("An empirical measure needs at least one atom")
        arr.setflags(write=False)
        object.__setattr__(self, "atoms", arr)

    @property
    def count(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def weight(self) -> float:
        return 1.0 / self.count

    def sorted_atoms(self) -> np.ndarray:
        """Atoms in lexicographic order (canonical multiset representative)"""
        order = np.lexsort(self.atoms.T[::-1])
        return self.atoms[order]

    def multiset_key(self, decimals: int = 15) -> Tuple[float, ...]:
        return tuple(np.round(self.sorted_atoms(), decimals).ravel().tolist())

    def same_multiset(self, other: "EmpiricalMeasure") -> bool:
        return self.atoms.shape == other.atoms.shape and np.array_equal(
            self.sorted_atoms(), other.sorted_atoms())

    def translated(self, shift) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.atoms + np.asarray(shift, dtype=np.float64),
                                self.excluded_index, self.original_count)


def empirical(points: Union[Sequence, np.ndarray], i: Optional[int]) -> EmpiricalMeasure:
    """
    Empirical measure of all points but the i-th (0-based)

    Args:
        points: N points, shape (N, d) or (N,) in 1-D
        i: Excluded index, or None to keep every point

    Returns:
        Measure with N-1 atoms of weight 1/(N-1)

    Raises:
        UndefinedMeasureError: N = 1 with an excluded index
        ParameterError: i out of range
    """
    arr = _as_points(points)
    n = arr.shape[0]
    if i is None:
        return EmpiricalMeasure(arr, None, n)
    if n < 2:
        raise UndefinedMeasureError("m^{N,i} needs N >= 2 (weight 1/(N-1) is undefined)")
    if not 0 <= i < n:
        raise ParameterError(f"Excluded index {i} out of range for {n} points")
    return EmpiricalMeasure(np.delete(arr, i, axis=0), int(i), n)


def save_atoms_csv(measure: EmpiricalMeasure, path: Union[str, Path]) -> Path:
    """One atom per row, columns x0..x{d-1}"""
    frame = pd.DataFrame(measure.atoms, columns=[f"x{a}" for a in range(measure.dim)])
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format="%.17g")
    return target


def load_atoms_csv(path: Union[str, Path]) -> EmpiricalMeasure:
    frame = pd.read_csv(path)
    return EmpiricalMeasure(frame.to_numpy(dtype=np.float64))
