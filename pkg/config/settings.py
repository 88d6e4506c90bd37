"""
Configuration Management Module
Numerical defaults and runtime settings read from the environment
"""
import os
from typing import Dict, List

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Config:
    """Application configuration with validation of numerical settings"""

    def __init__(self):
        self._errors: List[str] = []

        # Application Configuration
        self.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
        self.OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")
        self.WORKERS = self._read_int("WORKERS", 1)
        self.DEFAULT_SEED = self._read_int("DEFAULT_SEED", 20240601)

        # Solver Configuration
        self._setup_solver_defaults()

        # Validate everything at once so a bad .env reports all problems
        self._validate()

    def _setup_solver_defaults(self):
        """Setup fixed-point, time stepping and memory defaults"""

        # Damped Picard iteration shared by the MFG and linearized solvers
        self.PICARD_TOLERANCE = self._read_float("PICARD_TOLERANCE", 1e-8)
        self.PICARD_RELAXATION = self._read_float("PICARD_RELAXATION", 0.25)
        self.PICARD_MAX_ITERS = self._read_int("PICARD_MAX_ITERS", 2000)

        # Fraction of the explicit transport limit used for automatic step counts
        self.CFL_SAFETY = self._read_float("CFL_SAFETY", 0.9)

        # Tensor-grid Nash solver
        self.NASH_MEMORY_BUDGET_MB = self._read_float("NASH_MEMORY_BUDGET_MB", 2048.0)

        # Relative threshold for finite-difference noise flags
        self.NOISE_FLOOR_WARNING = self._read_float("NOISE_FLOOR_WARNING", 1e-3)

    def _read_int(self, name: str, default: int) -> int:
        raw = os.getenv(name)
        if raw is None or raw == "":
            return default
        try:
            return int(raw)
        except ValueError:
            self._errors.append(f"{name}={raw!r} is not an integer")
            return default

    def _read_float(self, name: str, default: float) -> float:
        raw = os.getenv(name)
        if raw is None or raw == "":
            return default
        try:
            return float(raw)
        except ValueError:
            self._errors.append(f"{name}={raw!r} is not a number")
            return default

    def _validate(self):
        """Validate numerical ranges"""
        errors = list(self._errors)

        if self.LOG_LEVEL not in _LOG_LEVELS:
            errors.append(f"LOG_LEVEL must be one of {', '.join(_LOG_LEVELS)}")
        if self.WORKERS < 1:
            errors.append("WORKERS must be at least 1")
        if self.DEFAULT_SEED < 0:
            errors.append("DEFAULT_SEED must be non-negative")
        if not self.PICARD_TOLERANCE > 0:
            errors.append("PICARD_TOLERANCE must be positive")
        if not 0 < self.PICARD_RELAXATION <= 1:
            errors.append("PICARD_RELAXATION must lie in (0, 1]")
        if self.PICARD_MAX_ITERS < 1:
            errors.append("PICARD_MAX_ITERS must be at least 1")
        if not 0 < self.CFL_SAFETY <= 1:
            errors.append("CFL_SAFETY must lie in (0, 1]")
        if not self.NASH_MEMORY_BUDGET_MB > 0:
            errors.append("NASH_MEMORY_BUDGET_MB must be positive")
        if not self.NOISE_FLOOR_WARNING > 0:
            errors.append("NOISE_FLOOR_WARNING must be positive")

        if errors:
            raise ValueError(
                "Invalid configuration:\n  " + "\n  ".join(errors) + "\n"
                "Please fix them in your .env file"
            )

    def solver_defaults(self) -> Dict[str, float]:
        """Get the solver defaults recorded in run manifests"""
        return {
            "picard_tolerance": self.PICARD_TOLERANCE,
            "picard_relaxation": self.PICARD_RELAXATION,
            "picard_max_iters": self.PICARD_MAX_ITERS,
            "cfl_safety": self.CFL_SAFETY,
            "nash_memory_budget_mb": self.NASH_MEMORY_BUDGET_MB,
        }


# Singleton instance
config = Config()
