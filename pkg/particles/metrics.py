"""
Particle Metrics Module
Shared-noise path gaps, Gronwall envelopes and propagation-of-chaos
statistics of trajectory ensembles.
"""
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from grid_core.grids import TorusGrid
from grid_core.operators import geodesic_distance
from measures.densities import DensityField, DensityFlow
from measures.empirical import EmpiricalMeasure
from measures.wasserstein import w1_circle
from particles.drifts import DriftSpec
from particles.simulation import TrajectoryEnsemble, stream
from utils.errors import CouplingViolationError, ParameterError, UnsupportedDimensionError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def _mean_stderr(samples: np.ndarray) -> Tuple[float, float]:
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        return float(samples.mean()), 0.0
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size))


def check_coupled(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble):
    """
    Raises:
        CouplingViolationError: the ensembles were not driven by the same (Z, B)
    """
    problems = []
    if (e1.initial_seed, e1.noise_seed) != (e2.initial_seed, e2.noise_seed):
        problems.append(f"seeds {(e1.initial_seed, e1.noise_seed)} vs {(e2.initial_seed, e2.noise_seed)}")
    if e1.paths.shape != e2.paths.shape:
        problems.append(f"shapes {e1.paths.shape} vs {e2.paths.shape}")
    if e1.time != e2.time:
        problems.append("time grids differ")
    if e1.stream_order != e2.stream_order:
        problems.append("stream orders differ")
    if problems:
        raise CouplingViolationError("Ensembles are not coupled: " + "; ".join(problems))


def coupled_gap(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble) -> Tuple[float, float]:
    """
    E[sup_t |X^1_{i,t} - X^2_{i,t}|] with geodesic distance, averaged over players

    Returns:
        (mean over replicas, standard error over replicas)
    """
    check_coupled(e1, e2)
    dist = geodesic_distance(e1.paths, e2.paths)
    per_replica = dist.max(axis=2).mean(axis=1)
    return _mean_stderr(per_replica)


def gronwall_envelope(eta: float, lipschitz: float, duration: float) -> float:
    """eta (T - t0) exp(L (T - t0))"""
    if eta < 0 or lipschitz < 0 or duration < 0:
        raise ParameterError("Envelope inputs must be non-negative")
    return eta * duration * math.exp(lipschitz * duration)


def measure_drift_gap(d1: DriftSpec, d2: DriftSpec, ensemble: TrajectoryEnsemble) -> float:
    """Largest |b1 - b2| over the states visited by an ensemble"""
    worst = 0.0
    time = ensemble.time
    for s in range(time.steps):
        state = ensemble.paths[:, :, s]
        t = time.node(s)
        diff = np.linalg.norm(d1(t, s, state) - d2(t, s, state), axis=-1)
        worst = max(worst, float(np.max(diff)))
    return worst


@dataclass(frozen=True)
class ChaosReport:
    """
    Attributes:
        endpoint_w1: mean over replicas of W1(empirical endpoints, m(T))
        correlation: mean off-diagonal correlation of lifted displacements
        correlation_sigma: 1 / sqrt(K - 1), the null standard deviation
        w1_curve: (times, mean W1) on the evaluated time nodes
    """
    endpoint_w1: float
    endpoint_w1_stderr: float
    correlation: float
    correlation_sigma: float
    times: np.ndarray
    w1_curve: np.ndarray
    players: int
    replicas: int

    def summary(self) -> Dict[str, float]:
        data = asdict(self)
        data.pop("times")
        data.pop("w1_curve")
        return data

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "w1": self.w1_curve})


def _reference_at(reference: Union[DensityFlow, DensityField], t: float) -> DensityField:
    return reference.at_time(t) if isinstance(reference, DensityFlow) else reference


def pairwise_correlation(e: TrajectoryEnsemble) -> Tuple[float, float]:
    """Mean correlation between distinct players' displacements, replicas as observations"""
    if e.replicas < 3 or e.players < 2:
        return 0.0, math.inf
    disp = e.displacements()[..., 0]
    corr = np.corrcoef(disp.T)
    off = corr[~np.eye(e.players, dtype=bool)]
    return float(np.nanmean(off)), 1.0 / math.sqrt(e.replicas - 1)


def chaos_metrics(e: TrajectoryEnsemble, reference_flow: Union[DensityFlow, DensityField],
                  curve_stride: Optional[int] = None) -> ChaosReport:
    """
    Endpoint W1 to the reference law, pairwise endpoint correlation and a W1 curve

    Args:
        e: Ensemble in dimension one
        reference_flow: Density flow m(t) (or a fixed density)
        curve_stride: Time-node stride of the W1 curve (about 20 points by default)

    Raises:
        UnsupportedDimensionError: d != 1
    """
    if e.dim != 1:
        raise UnsupportedDimensionError("Exact circle W1 needs d = 1")
    time = e.time
    end = _reference_at(reference_flow, time.horizon_T)
    endpoint = np.array([w1_circle(EmpiricalMeasure(e.endpoint(r)), end) for r in range(e.replicas)])
    mean, stderr = _mean_stderr(endpoint)
    correlation, sigma = pairwise_correlation(e)

    stride = curve_stride or max(1, time.steps // 20)
    nodes = sorted(set(range(0, time.steps + 1, stride)) | {time.steps})
    curve = []
    for k in nodes:
        ref = _reference_at(reference_flow, time.node(k))
        curve.append(np.mean([w1_circle(EmpiricalMeasure(e.paths[r, :, k]), ref) for r in range(e.replicas)]))
    logger.info(f"chaos_metrics[{e.drift_label}] N={e.players}: W1(T)={mean:.4f}+-{stderr:.4f} "
                f"corr={correlation:+.4f} (sigma {sigma:.4f})")
    return ChaosReport(
        endpoint_w1=mean,
        endpoint_w1_stderr=stderr,
        correlation=correlation,
        correlation_sigma=sigma,
        times=np.array([time.node(k) for k in nodes]),
        w1_curve=np.array(curve),
        players=e.players,
        replicas=e.replicas,
    )


def empirical_w1(N: int, seeds: int, seed_root: int, grid: Optional[TorusGrid] = None) -> Tuple[float, float]:
    """
    Mean and standard error of W1(empirical measure of N iid uniforms, Lebesgue)
    over `seeds` independent draws
    """
    grid = grid or TorusGrid(1, 64)
    uniform = DensityField.uniform(grid)
    values = np.array([w1_circle(EmpiricalMeasure(stream(seed_root, s, 0).random((N, 1))), uniform)
                       for s in range(seeds)])
    return _mean_stderr(values)


def save_paths(e: TrajectoryEnsemble, path: Union[str, Path]) -> Path:
    """Binary dump of the wrapped paths with the seeds needed to reproduce them"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, paths=e.paths, initial_seed=e.initial_seed, noise_seed=e.noise_seed,
                        t0=e.time.t0, T=e.time.horizon_T, steps=e.time.steps)
    return path
