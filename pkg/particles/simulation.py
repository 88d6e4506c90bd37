"""
Particle Simulation Module
Euler-Maruyama simulation of N-particle systems on the torus with reproducible,
shareable randomness.

Player j of replica r draws its initial uniform from the stream
SeedSequence(initial_seed, spawn_key=(r, j)) and its Brownian increments from
SeedSequence(noise_seed, spawn_key=(r, j)). Two runs with the same seeds are
therefore driven by identical (Z, B) whatever their drifts.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from grid_core.grids import TimeGrid
from measures.densities import DensityField
from measures.sampling import inverse_cdf
from particles.drifts import DriftKind, DriftSpec
from utils.errors import DriftEvaluationError, ParameterError
from utils.logger import setup_logger

logger = setup_logger(__name__)

BOUND_SLACK = 1e-9


def stream(seed: int, replica: int, player: int) -> np.random.Generator:
    """Counter-based generator for one (replica, player) pair"""
    sequence = np.random.SeedSequence(seed, spawn_key=(replica, player))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """
    Paths of K replicas of an N-particle system

    Attributes:
        paths: (K, N, S+1, d) positions in [0, 1)^d
        lifted: (K, N, S+1, d) unwrapped positions (initial point plus increments)
        stream_order: stream index used by each player slot (identity when None)
    """
    paths: np.ndarray
    lifted: np.ndarray
    time: TimeGrid
    initial_seed: int
    noise_seed: int
    drift_label: str
    stream_order: Optional[Tuple[int, ...]] = None
    bound_exceeded: int = field(default=0, compare=False)

    @property
    def replicas(self) -> int:
        return self.paths.shape[0]

    @property
    def players(self) -> int:
        return self.paths.shape[1]

    @property
    def dim(self) -> int:
        return self.paths.shape[-1]

    def endpoint(self, r: int) -> np.ndarray:
        return self.paths[r, :, -1, :]

    def displacements(self) -> np.ndarray:
        """(K, N, d) lifted displacement over the whole horizon"""
        return self.lifted[:, :, -1, :] - self.lifted[:, :, 0, :]


def _stream_order(order: Optional[Sequence[int]], n: int) -> Optional[Tuple[int, ...]]:
    if order is None:
        return None
    order = tuple(int(j) for j in order)
    if sorted(order) != list(range(n)):
        raise ParameterError(f"stream_order must be a permutation of 0..{n - 1}")
    return order


def draw_initial(m0: DensityField, players: int, replicas: int, seed: int,
                 order: Optional[Sequence[int]] = None) -> np.ndarray:
    """(K, N, d) iid initial points, player j of replica r from stream order[j]"""
    d = m0.grid.dim
    order = order or range(players)
    uniforms = np.empty((replicas, players, d))
    for r in range(replicas):
        for j, s in enumerate(order):
            uniforms[r, j] = stream(seed, r, s).random(d)
    return inverse_cdf(m0, uniforms.reshape(-1, d)).reshape(replicas, players, d)


def draw_noise(players: int, replicas: int, steps: int, dim: int, seed: int,
               order: Optional[Sequence[int]] = None) -> np.ndarray:
    """(K, N, S, d) standard normal increments"""
    order = order or range(players)
    noise = np.empty((replicas, players, steps, dim))
    for r in range(replicas):
        for j, s in enumerate(order):
            noise[r, j] = stream(seed, r, s).standard_normal((steps, dim))
    return noise


PER_PARTICLE = (DriftKind.ZERO, DriftKind.CONSTANT, DriftKind.FIELD,
                DriftKind.MFG_LOCAL, DriftKind.MFG_MOLLIFIED)


def _fails(drift: DriftSpec, t: float, step: int, states: np.ndarray) -> bool:
    try:
        velocity = np.asarray(drift(t, step, states), dtype=np.float64)
    except Exception:
        return True
    return velocity.shape != states.shape or not np.all(np.isfinite(velocity))


def locate_failure(drift: DriftSpec, t: float, step: int,
                   state: np.ndarray) -> Tuple[Optional[int], Optional[int]]:
    """
    (replica, player) of a failed batched evaluation, re-evaluating one replica at a time

    The player is only isolated for drifts acting on each particle separately;
    Nash and projected-master drifts report None since they read the whole replica.
    """
    for r in range(state.shape[0]):
        if not _fails(drift, t, step, state[r:r + 1]):
            continue
        if drift.kind in PER_PARTICLE:
            for j in range(state.shape[1]):
                if _fails(drift, t, step, state[r:r + 1, j:j + 1]):
                    return r, j
        return r, None
    return None, None


def simulate(drift: DriftSpec, m0: DensityField, N: int, K: int, time: TimeGrid,
             seeds: Tuple[int, int], stream_order: Optional[Sequence[int]] = None) -> TrajectoryEnsemble:
    """
    dX^i = b^i(t, X) dt + sqrt(2) dB^i, X^i_{t0} = Z^i ~ m0, all particles wrapped to the torus

    Args:
        drift: Batched drift
        m0: Initial law of every particle
        N: Particles per replica
        K: Replicas
        time: Time grid of the Euler-Maruyama steps
        seeds: (initial_seed, noise_seed)
        stream_order: Permutation assigning randomness streams to player slots

    Returns:
        TrajectoryEnsemble

    Raises:
        DriftEvaluationError: the drift raised or returned non-finite velocities
    """
    if N < 1 or K < 1:
        raise ParameterError(f"Need at least one particle and one replica, got N={N}, K={K}")
    if drift.dim != m0.grid.dim:
        raise ParameterError(f"Drift dimension {drift.dim} does not match the grid dimension {m0.grid.dim}")
    initial_seed, noise_seed = (int(s) for s in seeds)
    order = _stream_order(stream_order, N)
    d = m0.grid.dim
    steps, dt = time.steps, time.dt

    start = draw_initial(m0, N, K, initial_seed, order)
    noise = draw_noise(N, K, steps, d, noise_seed, order)

    lifted = np.empty((K, N, steps + 1, d))
    lifted[:, :, 0] = start
    paths = np.empty_like(lifted)
    paths[:, :, 0] = start
    exceeded = 0
    scale = np.sqrt(2.0 * dt)

    for s in range(steps):
        t = time.node(s)
        state = paths[:, :, s]
        try:
            velocity = np.asarray(drift(t, s, state), dtype=np.float64)
        except Exception as e:
            raise DriftEvaluationError(*locate_failure(drift, t, s, state), s, str(e)) from e
        if velocity.shape != state.shape:
            raise DriftEvaluationError(*locate_failure(drift, t, s, state), s,
                                       f"velocity shape {velocity.shape}, expected {state.shape}")
        bad = np.argwhere(~np.isfinite(velocity))
        if bad.size:
            r, i = (int(v) for v in bad[0][:2])
            raise DriftEvaluationError(r, i, s, "non-finite velocity")
        if drift.bound > 0:
            exceeded += int(np.sum(np.linalg.norm(velocity, axis=-1) > drift.bound + BOUND_SLACK))

        lifted[:, :, s + 1] = lifted[:, :, s] + dt * velocity + scale * noise[:, :, s]
        wrapped = np.mod(lifted[:, :, s + 1], 1.0)
        paths[:, :, s + 1] = np.where(wrapped >= 1.0, 0.0, wrapped)

    if exceeded:
        logger.warning(f"simulate[{drift.label}]: {exceeded} velocities above the declared bound {drift.bound:g}")
    logger.info(f"simulate[{drift.label}] N={N} K={K} steps={steps} seeds=({initial_seed}, {noise_seed})")
    return TrajectoryEnsemble(
        paths=paths,
        lifted=lifted,
        time=time,
        initial_seed=initial_seed,
        noise_seed=noise_seed,
        drift_label=drift.label,
        stream_order=order,
        bound_exceeded=exceeded,
    )
