"""
Error Types Module
Exceptions raised by grids, solvers, probes and the experiment runner.

Input problems derive from ValueError and numerical failures from
RuntimeError, so callers that only know the builtin types still catch them.
"""
from typing import List, Optional, Sequence, Tuple


class GridError(ValueError):
    """Grid parameters or field shapes are inconsistent"""


class NonFiniteFieldError(GridError):
    """A field contains NaN or infinite entries"""

    def __init__(self, index: Tuple[int, ...], what: str = "field"):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"Non-finite value in {what} at index {self.index}")


class OutOfRangeError(ValueError):
    """A time query falls outside the time grid"""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range"""


class ConfigurationError(ValueError):
    """A configuration or probe dictionary is empty or malformed"""


class InvalidDensityError(ValueError):
    """A field is not a probability density on the grid"""


class UndefinedMeasureError(ValueError):
    """An empirical measure would have no atoms"""


class UnsupportedDimensionError(ValueError):
    """The requested operation is only available in dimension one"""


class ResolutionError(ValueError):
    """A length scale is below the grid spacing"""


class SamplerError(RuntimeError):
    """A probe sampler produced no admissible density"""


class CFLViolationError(ValueError):
    """Explicit transport step exceeds its stability limit"""

    def __init__(self, dt: float, suggested_dt: float):
        self.dt = dt
        self.suggested_dt = suggested_dt
        super().__init__(
            f"Time step {dt:.3e} violates the transport CFL bound; "
            f"use dt <= {suggested_dt:.3e}"
        )


class MaximumPrincipleViolation(RuntimeError):
    """A monotone scheme produced values beyond its a priori bound"""


class ConservativityFault(RuntimeError):
    """Fokker-Planck step changed the mass beyond rounding"""

    def __init__(self, step: int, drift: float):
        self.step = step
        self.drift = drift
        super().__init__(f"Mass drift {drift:.3e} at step {step} exceeds 1e-8")


class DivergenceError(RuntimeError):
    """Fixed-point iteration did not reach its tolerance"""

    def __init__(self, message: str, residual_history: Sequence[float]):
        self.residual_history: List[float] = list(residual_history)
        super().__init__(message)


class MemoryBudgetError(ValueError):
    """Tensor grid does not fit the memory budget"""

    def __init__(self, required_mb: float, budget_mb: float, suggested: Optional[Tuple[int, int]]):
        self.required_mb = required_mb
        self.budget_mb = budget_mb
        self.suggested = suggested
        hint = f"; try (N, M) = {suggested}" if suggested else ""
        super().__init__(
            f"Nash solve needs about {required_mb:.0f} MB, budget is {budget_mb:.0f} MB{hint}"
        )


class CouplingViolationError(ValueError):
    """Trajectory ensembles do not share seeds or grids"""


class DriftEvaluationError(RuntimeError):
    """A drift evaluator failed while simulating particles"""

    def __init__(self, replica: Optional[int], player: Optional[int], step: int, reason: str):
        self.replica = replica
        self.player = player
        self.step = step
        super().__init__(
            f"Drift evaluation failed (replica={replica}, player={player}, step={step}): {reason}"
        )


class IntegrityError(RuntimeError):
    """An output directory holds a different run under the same config hash"""
