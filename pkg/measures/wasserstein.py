"""
Wasserstein-1 Module
Exact circular W1 in dimension one and dictionary/greedy-plan bounds in any dimension.

Grid densities are read as cell-wise constant measures, atoms as equal-weight
Dirac masses.
"""
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from grid_core.grids import TorusGrid
from grid_core.norms import ALL_PAIRS_LIMIT
from grid_core.operators import geodesic_distance
from measures.densities import DensityField
from measures.empirical import EmpiricalMeasure
from utils.errors import GridError, UnsupportedDimensionError

Measure = Union[DensityField, EmpiricalMeasure]


def _dim(measure: Measure) -> int:
    return measure.grid.dim if isinstance(measure, DensityField) else measure.dim


class _Cdf:
    """Right-continuous CDF on [0, 1) of a 1-D measure"""

    def __init__(self, measure: Measure):
        if isinstance(measure, DensityField):
            grid = measure.grid
            w = measure.node_masses()
            h = grid.spacing
            m = grid.points_per_axis
            self.breaks = np.concatenate(([0.0], (np.arange(m) + 0.5) * h, [1.0]))
            cum = np.concatenate(([0.0, 0.5 * w[0]], 0.5 * w[0] + np.cumsum(w[1:]), [1.0]))
            cum[-1] = cum[-2] + 0.5 * w[0]
            self.values = cum
            self.atoms = None
        else:
            self.atoms = np.sort(measure.atoms[:, 0])
            self.breaks = self.atoms

    def left_right(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """CDF values just after lo and just before hi on each segment"""
        if self.atoms is None:
            return np.interp(lo, self.breaks, self.values), np.interp(hi, self.breaks, self.values)
        level = np.searchsorted(self.atoms, lo, side="right") / self.atoms.size
        return level, level


def _level_measure(c: float, lengths, lo, hi, strict: bool) -> float:
    flat = hi == lo
    span = np.where(flat, 1.0, hi - lo)
    frac = np.clip((c - lo) / span, 0.0, 1.0)
    if strict:
        frac = np.where(flat, (lo < c).astype(float), frac)
    else:
        frac = np.where(flat, (lo <= c).astype(float), frac)
    return float(np.sum(lengths * frac))


def _level_median(lengths: np.ndarray, v0: np.ndarray, v1: np.ndarray) -> float:
    """c with |{D < c}| <= 1/2 <= |{D <= c}| for piecewise linear D"""
    lo = np.minimum(v0, v1)
    hi = np.maximum(v0, v1)
    levels = np.unique(np.concatenate((lo, hi)))
    total = float(lengths.sum())
    half = 0.5 * total

    left, right = 0, levels.size - 1
    while left < right:
        mid = (left + right) // 2
        if _level_measure(levels[mid], lengths, lo, hi, strict=False) >= half:
            right = mid
        else:
            left = mid + 1
    k = left
    c_k = float(levels[k])
    if k == 0 or _level_measure(c_k, lengths, lo, hi, strict=True) <= half:
        return c_k
    c_prev = float(levels[k - 1])
    below = _level_measure(c_prev, lengths, lo, hi, strict=False)
    above = _level_measure(c_k, lengths, lo, hi, strict=True)
    return c_prev + (half - below) * (c_k - c_prev) / (above - below)


def _abs_integral(lengths: np.ndarray, v0: np.ndarray, v1: np.ndarray, c: float) -> float:
    a = v0 - c
    b = v1 - c
    same_sign = a * b >= 0
    mean_abs = 0.5 * np.abs(a + b)
    denom = np.where(same_sign, 1.0, np.abs(b - a))
    crossing = (a * a + b * b) / (2.0 * denom)
    return float(np.sum(lengths * np.where(same_sign, mean_abs, crossing)))


def w1_circle(mu: Measure, nu: Measure) -> float:
    """
    Exact Wasserstein-1 distance on the unit circle

    min over c of the integral of |F_mu - F_nu - c|, attained at a level
    median of F_mu - F_nu.

    Raises:
        UnsupportedDimensionError: either measure lives in d != 1 (use w1_bound)
        GridError: two densities on different grids
    """
    if _dim(mu) != 1 or _dim(nu) != 1:
        raise UnsupportedDimensionError("Exact W1 is available on the circle only; use w1_bound")
    if isinstance(mu, DensityField) and isinstance(nu, DensityField) and not mu.grid.matches(nu.grid):
        raise GridError("Densities must share a grid")

    f_mu, f_nu = _Cdf(mu), _Cdf(nu)
    breaks = np.unique(np.concatenate(([0.0, 1.0], f_mu.breaks, f_nu.breaks)))
    lo, hi = breaks[:-1], breaks[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    lengths = hi - lo

    mu_lo, mu_hi = f_mu.left_right(lo, hi)
    nu_lo, nu_hi = f_nu.left_right(lo, hi)
    v0 = mu_lo - nu_lo
    v1 = mu_hi - nu_hi
    c = _level_median(lengths, v0, v1)
    return _abs_integral(lengths, v0, v1, c)


class W1Bounds(NamedTuple):
    lower: float
    upper: float


def _triangle_antiderivative(y: np.ndarray) -> np.ndarray:
    """Antiderivative of the 1-periodic distance-to-zero wave"""
    whole = np.floor(y)
    s = y - whole
    inner = np.where(s <= 0.5, 0.5 * s * s, 0.125 + (s - 0.5) - 0.5 * (s * s - 0.25))
    return 0.25 * whole + inner


def _dictionary_pairings(measure: Measure, dim: int, anchors: np.ndarray, freqs) -> np.ndarray:
    """Integrals of the 1-Lipschitz test functions against one measure"""
    rows = []
    if isinstance(measure, DensityField):
        grid = measure.grid
        h = grid.spacing
        w = measure.node_masses()
        for axis in range(dim):
            x = grid.points[..., axis]
            for a in anchors:
                avg = (_triangle_antiderivative(x + 0.5 * h - a) - _triangle_antiderivative(x - 0.5 * h - a)) / h
                rows.append(np.sum(w * avg))
            for k in freqs:
                sinc = np.sinc(k * h)
                for phase in (0.0, 0.5 * np.pi):
                    wave = np.sin(2.0 * np.pi * k * x + phase) / (2.0 * np.pi * k)
                    rows.append(np.sum(w * wave) * sinc)
    else:
        pts = measure.atoms
        for axis in range(dim):
            x = pts[:, axis]
            for a in anchors:
                diff = np.abs(x - a)
                rows.append(np.mean(np.minimum(diff, 1.0 - diff)))
            for k in freqs:
                for phase in (0.0, 0.5 * np.pi):
                    rows.append(np.mean(np.sin(2.0 * np.pi * k * x + phase) / (2.0 * np.pi * k)))
    return np.asarray(rows)


def _node_masses(measure: Measure, grid: TorusGrid) -> Tuple[np.ndarray, float]:
    """Masses snapped to the nodes, and the mean snapping distance of atoms"""
    if isinstance(measure, DensityField):
        return measure.node_masses(), 0.0
    idx = grid.nearest_index(measure.atoms)
    masses = np.zeros(grid.shape)
    np.add.at(masses, tuple(idx.T), measure.weight)
    snap = float(np.mean(geodesic_distance(measure.atoms, idx / grid.points_per_axis)))
    return masses, snap


def _greedy_plan_cost(p: np.ndarray, q: np.ndarray, grid: TorusGrid) -> float:
    m = grid.points_per_axis
    if grid.node_count <= ALL_PAIRS_LIMIT:
        offsets = np.argwhere(np.ones(grid.shape, dtype=bool))
    else:
        radius = max(1, int(np.floor(ALL_PAIRS_LIMIT ** (1.0 / grid.dim) / 2)))
        axis = np.arange(-radius, radius + 1)
        offsets = np.array(np.meshgrid(*([axis] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T
    wrapped = np.minimum(np.mod(offsets, m), m - np.mod(offsets, m)) / m
    lengths = np.sqrt(np.sum(wrapped ** 2, axis=1))
    order = np.argsort(lengths, kind="stable")

    surplus = p - q
    axes = grid.axes
    cost = 0.0
    for j in order:
        if lengths[j] == 0.0:
            continue
        o = tuple(int(v) for v in offsets[j])
        supply = np.clip(surplus, 0.0, None)
        deficit = np.clip(-surplus, 0.0, None)
        flow = np.minimum(supply, np.roll(deficit, tuple(-v for v in o), axis=axes))
        moved = float(flow.sum())
        if moved <= 0.0:
            continue
        cost += moved * float(lengths[j])
        surplus = surplus - flow + np.roll(flow, o, axis=axes)
    leftover = 0.5 * float(np.abs(surplus).sum())
    return cost + leftover * 0.5 * np.sqrt(grid.dim)


def w1_bound(mu: Measure, nu: Measure, grid: Optional[TorusGrid] = None) -> W1Bounds:
    """
    Lower and upper bounds of W1 in any dimension

    lower: largest pairing against a fixed dictionary of 1-Lipschitz functions
    (per-axis distance-to-anchor waves and scaled sinusoids), integrated exactly
    over cells for densities.
    upper: cost of a greedy nearest-first transport plan between node masses,
    plus the cost of moving atoms (or cell mass) to the nodes.
    """
    dim = _dim(mu)
    if _dim(nu) != dim:
        raise GridError("Measures live in different dimensions")
    dens = [x for x in (mu, nu) if isinstance(x, DensityField)]
    if len(dens) == 2 and not dens[0].grid.matches(dens[1].grid):
        raise GridError("Densities must share a grid")
    if grid is None:
        grid = dens[0].grid if dens else TorusGrid(dim, 64 if dim == 1 else 16)

    anchors = np.arange(16) / 16.0
    freqs = (1, 2, 3, 4)
    pair = _dictionary_pairings(mu, dim, anchors, freqs) - _dictionary_pairings(nu, dim, anchors, freqs)
    lower = float(np.max(np.abs(pair))) if pair.size else 0.0

    p, snap_mu = _node_masses(mu, grid)
    q, snap_nu = _node_masses(nu, grid)
    cell_snap = grid.spacing / 4.0 if dim == 1 else float(np.sqrt(dim / 12.0)) * grid.spacing
    if len(dens) == 1:
        snap_mu += cell_snap if isinstance(mu, DensityField) else 0.0
        snap_nu += cell_snap if isinstance(nu, DensityField) else 0.0
    upper = _greedy_plan_cost(p, q, grid) + snap_mu + snap_nu
    return W1Bounds(lower, upper)
