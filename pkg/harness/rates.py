"""
Rate Fitting Module
Log-log least squares used to turn sweep tables into convergence exponents.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import linregress

from utils.errors import ParameterError

MIN_POINTS = 3


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float

    def within(self, low: float, high: float) -> bool:
        return low <= self.slope <= high


def fit_rate(xs: Sequence[float], ys: Sequence[float]) -> RateFit:
    """
    Fit log y = intercept + slope log x

    Args:
        xs: Positive abscissae (at least three)
        ys: Positive values

    Returns:
        RateFit with the coefficient of determination r2

    Raises:
        ParameterError: fewer than three points, length mismatch or non-positive entries
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError(f"xs and ys must be matching lists, got {x.shape} and {y.shape}")
    if x.size < MIN_POINTS:
        raise ParameterError(f"Rate fits need at least {MIN_POINTS} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("Rate fits need finite data")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("Rate fits need strictly positive data")
    if np.ptp(x) == 0:
        raise ParameterError("Rate fits need at least two distinct abscissae")

    result = linregress(np.log(x), np.log(y))
    return RateFit(float(result.slope), float(result.intercept), float(result.rvalue ** 2))
