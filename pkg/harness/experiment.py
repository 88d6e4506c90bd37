"""
Experiment Configuration Module
Frozen experiment descriptions loaded from TOML or JSON, validated up front
and identified by a content hash.
"""
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from config.settings import config
from coupling.problem import ProblemSpec, problem_from_dict
from nash.residuals import epsilon_schedule
from utils.errors import ConfigurationError
from utils.logger import setup_logger

logger = setup_logger(__name__)

KINDS = (
    "assumption-probes",
    "closeness-scaling",
    "monotonicity",
    "epsilon-stability",
    "derivative-check",
    "energy-identity",
    "nash-gap",
    "chaos",
    "empirical-rate",
    "parabolic-order",
)

# Keys that do not change results and stay out of the hash
_VOLATILE = ("output_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: a kind, the problem data and its sweep axes

    Attributes:
        kind: One of KINDS
        problem: Problem block passed to problem_from_dict
        points: Grid points per axis
        steps: Time steps (None derives them from the CFL bound)
        epsilons: Mollification scales of an epsilon sweep
        players: Player counts of an N sweep
        beta: Exponent of the schedule eps_N = (ln N)^(-beta); replaces `epsilons`
        seeds: Number of seeds (seed, seed+1, ...)
        seed: Root seed
        replicas: Particle replicas K
        samples: Sample count of probes and Monte Carlo gaps
        tolerance: Picard tolerance (config default when None)
        thresholds: Overrides of the kind's acceptance thresholds
    """
    kind: str
    problem: Dict[str, Any] = field(default_factory=lambda: {"profile": "default"})
    dim: int = 1
    points: int = 128
    steps: Optional[int] = None
    t0: float = 0.0
    epsilons: Tuple[float, ...] = (0.2, 0.1, 0.05)
    players: Tuple[int, ...] = (2, 3, 4)
    beta: Optional[float] = None
    seeds: int = 1
    seed: int = field(default_factory=lambda: config.DEFAULT_SEED)
    replicas: int = 64
    samples: int = 32
    tolerance: Optional[float] = None
    thresholds: Dict[str, float] = field(default_factory=dict)
    output_dir: str = field(default_factory=lambda: config.OUTPUT_DIR)
    workers: int = field(default_factory=lambda: config.WORKERS)

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "players", tuple(int(n) for n in self.players))
        object.__setattr__(self, "problem", dict(self.problem))
        object.__setattr__(self, "thresholds", {k: float(v) for k, v in self.thresholds.items()})
        self.validate()

    def validate(self):
        """
        Raises:
            ConfigurationError: listing every problem found
        """
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind must be one of {', '.join(KINDS)}, got '{self.kind}'")
        if self.dim < 1:
            errors.append("dim must be at least 1")
        if self.points < 8:
            errors.append("points must be at least 8")
        if self.steps is not None and self.steps < 1:
            errors.append("steps must be positive")
        if not self.epsilons:
            errors.append("epsilons must not be empty")
        if any(not e > 0 for e in self.epsilons):
            errors.append("epsilons must be positive")
        if not self.players:
            errors.append("players must not be empty")
        if any(n < 1 for n in self.players):
            errors.append("players must be positive")
        if self.beta is not None and not self.beta > 0:
            errors.append("beta must be positive")
        if self.beta is not None and any(n < 2 for n in self.players):
            errors.append("the epsilon schedule needs N >= 2")
        if self.seeds < 1:
            errors.append("seeds must be at least 1")
        if self.seed < 0:
            errors.append("seed must be non-negative")
        if self.replicas < 1 or self.samples < 1:
            errors.append("replicas and samples must be at least 1")
        if self.tolerance is not None and not self.tolerance > 0:
            errors.append("tolerance must be positive")
        if self.workers < 1:
            errors.append("workers must be at least 1")
        if errors:
            raise ConfigurationError("Invalid experiment configuration:\n  " + "\n  ".join(errors))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["epsilons"] = list(self.epsilons)
        data["players"] = list(self.players)
        return data

    def content(self) -> Dict[str, Any]:
        """Scientific content: everything but output location and parallelism"""
        data = self.to_dict()
        for key in _VOLATILE:
            data.pop(key)
        return data

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.content(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def run_name(self) -> str:
        return f"{self.kind}-{self.config_hash[:12]}"

    def problem_spec(self) -> ProblemSpec:
        return problem_from_dict(self.problem)

    def epsilon_for(self, n_players: int) -> float:
        """eps_N from the schedule when beta is set, else the first listed epsilon"""
        if self.beta is not None:
            return epsilon_schedule(n_players, self.beta)
        return self.epsilons[0]

    def seed_list(self) -> Tuple[int, ...]:
        return tuple(self.seed + s for s in range(self.seeds))

    def threshold(self, name: str, default: float) -> float:
        return self.thresholds.get(name, default)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with non-None overrides (used for CLI flags)"""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown experiment keys: {', '.join(unknown)}")
    if "kind" not in data:
        raise ConfigurationError("Experiment configuration needs a 'kind'")
    return ExperimentConfig(**data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an experiment file (.toml or .json)"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Experiment file {path} does not exist")
    if path.suffix == ".toml":
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    elif path.suffix == ".json":
        data = json.loads(path.read_text())
    else:
        raise ConfigurationError(f"Unsupported experiment file type '{path.suffix}'")
    logger.info(f"Loaded experiment {data.get('kind')} from {path}")
    return config_from_dict(data)


# Desk-scale defaults per kind
_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "assumption-probes": {"points": 64, "epsilons": (0.2, 0.1, 0.05)},
    "closeness-scaling": {"points": 128, "epsilons": (0.2, 0.1, 0.05), "samples": 32},
    "monotonicity": {"points": 64, "epsilons": (0.2, 0.1, 0.05), "seeds": 100},
    "epsilon-stability": {"points": 128, "steps": 200, "epsilons": (0.2, 0.1, 0.05)},
    "derivative-check": {"points": 64, "epsilons": (0.2,), "seeds": 1, "tolerance": 1e-11},
    "energy-identity": {"points": 64, "steps": 100, "epsilons": (0.2,), "seeds": 20, "tolerance": 1e-10},
    "nash-gap": {"points": 32, "players": (2, 3, 4), "epsilons": (0.2,), "samples": 16},
    "chaos": {"points": 32, "players": (2, 3, 4), "epsilons": (0.2,), "replicas": 64},
    "empirical-rate": {"points": 64, "players": (100, 1000, 10000), "samples": 200},
    "parabolic-order": {"points": 64},
}


def default_config(kind: str, **overrides) -> ExperimentConfig:
    if kind not in _DEFAULTS:
        raise ConfigurationError(f"Unknown experiment kind '{kind}'")
    data = dict(_DEFAULTS[kind])
    data.update(overrides)
    return ExperimentConfig(kind=kind, **data)
