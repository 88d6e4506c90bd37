"""
Problem Specification Module
Named data profiles (H, F, G, xi, eps), the coupling kinds used by the
MFG solvers, and loading of problem files (TOML or JSON).
"""
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from coupling.hamiltonian import HamiltonianSpec, relativistic_hamiltonian
from coupling.local import LocalCoupling, LocalCouplingOperator, affine_coupling
from coupling.mollifier import PROFILES, MollifiedCoupling, Mollifier
from grid_core.grids import TorusGrid
from utils.errors import ConfigurationError, ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)


class CouplingProfile(str, Enum):
    DEFAULT = "default"
    POTENTIAL_FREE = "potential_free"
    IDENTITY = "identity"
    QUADRATIC = "quadratic"
    STRONG = "strong"
    UNCOUPLED = "uncoupled"
    DECOUPLED = "decoupled"


# (potential, F amplitude, F quadratic, F slope, G amplitude)
_PROFILE_TABLE = {
    CouplingProfile.DEFAULT: (0.1, 0.5, 0.0, 1.0, 0.2),
    CouplingProfile.POTENTIAL_FREE: (0.0, 0.5, 0.0, 1.0, 0.2),
    CouplingProfile.IDENTITY: (0.0, 0.0, 0.0, 1.0, 0.0),
    CouplingProfile.QUADRATIC: (0.1, 0.5, 0.25, 1.0, 0.2),
    CouplingProfile.STRONG: (0.2, 1.0, 0.0, 1.0, 0.4),
    CouplingProfile.UNCOUPLED: (0.0, 0.0, 0.0, 0.0, 0.2),
    CouplingProfile.DECOUPLED: (0.0, 0.0, 0.0, 0.0, 0.0),
}


def default_problem(seed_profile: Union[CouplingProfile, str] = CouplingProfile.DEFAULT
                    ) -> Tuple[HamiltonianSpec, LocalCoupling]:
    """
    Concrete (H, F, G) family

    The default profile is H = sqrt(1+|p|^2) - 1 + 0.1 cos(2 pi x_1),
    F = m + 0.5 sin(2 pi x_1), G = 0.2 cos(2 pi x_1); the other profiles vary
    the amplitudes (uncoupled and decoupled set F to zero and are therefore
    only monotone in the weak sense, delta = 0).
    """
    profile = CouplingProfile(seed_profile)
    potential, amplitude, quadratic, slope, terminal = _PROFILE_TABLE[profile]
    hamiltonian = relativistic_hamiltonian(potential)
    coupling = affine_coupling(amplitude=amplitude, quadratic=quadratic,
                               terminal_amplitude=terminal, slope=slope)
    return hamiltonian, coupling


@dataclass(frozen=True)
class CouplingKind:
    """local, or mollified at scale epsilon"""
    kind: str
    epsilon: Optional[float] = None

    @classmethod
    def local(cls) -> "CouplingKind":
        return cls("local")

    @classmethod
    def mollified(cls, epsilon: float) -> "CouplingKind":
        if not epsilon > 0:
            raise ParameterError(f"Mollification scale must be positive, got {epsilon}")
        return cls("mollified", float(epsilon))

    @property
    def label(self) -> str:
        return "local" if self.kind == "local" else f"mollified({self.epsilon:g})"


@dataclass(frozen=True)
class ProblemSpec:
    """Data tuple (H, F, G, xi, eps) plus horizon T"""
    hamiltonian: HamiltonianSpec
    coupling: LocalCoupling
    kernel: str = "bump"
    epsilon: float = 0.1
    horizon: float = 1.0
    name: str = "default"
    source: Dict[str, Any] = field(default_factory=dict, compare=False)

    def operator(self, grid: TorusGrid, kind: CouplingKind, method: str = "auto"):
        """Coupling operator acting on grid densities"""
        if kind.kind == "local":
            return LocalCouplingOperator(self.coupling, grid)
        if kind.kind == "mollified":
            return MollifiedCoupling(self.coupling, Mollifier(grid, kind.epsilon, self.kernel), method)
        raise ConfigurationError(f"Unknown coupling kind '{kind.kind}'")

    def mollified(self, grid: TorusGrid, epsilon: Optional[float] = None,
                  method: str = "auto") -> MollifiedCoupling:
        eps = self.epsilon if epsilon is None else epsilon
        return MollifiedCoupling(self.coupling, Mollifier(grid, eps, self.kernel), method)


def build_problem(profile: Union[CouplingProfile, str] = CouplingProfile.DEFAULT,
                  epsilon: float = 0.1, horizon: float = 1.0) -> ProblemSpec:
    profile = CouplingProfile(profile)
    hamiltonian, coupling = default_problem(profile)
    return ProblemSpec(hamiltonian, coupling, "bump", epsilon, horizon, profile.value)


def problem_from_dict(data: Dict[str, Any]) -> ProblemSpec:
    """
    Build a ProblemSpec from {hamiltonian, coupling, terminal, mollifier, horizon}

    Either a top-level "profile" key or explicit blocks; block parameters
    override the profile's amplitudes.
    """
    base = CouplingProfile(data.get("profile", CouplingProfile.DEFAULT.value))
    potential, amplitude, quadratic, slope, terminal = _PROFILE_TABLE[base]

    ham = data.get("hamiltonian", {})
    if ham.get("profile", "relativistic") != "relativistic":
        raise ConfigurationError(f"Unknown hamiltonian profile '{ham.get('profile')}'")
    potential = float(ham.get("potential", potential))

    cpl = data.get("coupling", {})
    if cpl.get("profile", "affine") != "affine":
        raise ConfigurationError(f"Unknown coupling profile '{cpl.get('profile')}'")
    amplitude = float(cpl.get("amplitude", amplitude))
    quadratic = float(cpl.get("quadratic", quadratic))
    slope = float(cpl.get("slope", slope))

    term = data.get("terminal", {})
    if term.get("profile", "cosine") != "cosine":
        raise ConfigurationError(f"Unknown terminal profile '{term.get('profile')}'")
    terminal = float(term.get("amplitude", terminal))

    moll = data.get("mollifier", {})
    kernel = moll.get("profile", "bump")
    if kernel not in PROFILES:
        raise ConfigurationError(f"Unknown kernel profile '{kernel}'")
    epsilon = float(moll.get("epsilon", 0.1))
    horizon = float(data.get("horizon", 1.0))
    if not horizon > 0:
        raise ConfigurationError("Horizon must be positive")

    return ProblemSpec(
        hamiltonian=relativistic_hamiltonian(potential),
        coupling=affine_coupling(amplitude, quadratic, terminal, slope),
        kernel=kernel,
        epsilon=epsilon,
        horizon=horizon,
        name=data.get("name", base.value),
        source=dict(data),
    )


def load_problem(path: Union[str, Path]) -> ProblemSpec:
    """Read a problem specification file (.toml or .json)"""
    path = Path(path)
    if path.suffix == ".toml":
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    elif path.suffix == ".json":
        data = json.loads(path.read_text())
    else:
        raise ConfigurationError(f"Unsupported problem file type '{path.suffix}'")
    logger.info(f"Loaded problem specification from {path}")
    return problem_from_dict(data)
