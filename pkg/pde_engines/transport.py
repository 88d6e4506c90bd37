"""
Transport Stencils Module
Monotone discretizations of V . Dw and their exact transposes.

B(V, sigma) w = sum_a alpha_a D^-_a w + beta_a D^+_a w with s = max(|V_a|, sigma),
alpha = (V + s)/2 >= 0 and beta = (V - s)/2 <= 0. sigma = 0 is pure upwinding;
sigma >= |V| gives the Lax-Friedrichs form V.G w - (sigma h / 2) Lap_h w.
The "central" stencil drops the numerical viscosity (second order, not monotone).
"""
from typing import Tuple

import numpy as np

from grid_core.operators import backward_difference, forward_difference
from utils.errors import CFLViolationError, ConfigurationError

STENCILS = ("upwind", "central")


def _coefficients(v: np.ndarray, sigma: float, stencil: str) -> Tuple[np.ndarray, np.ndarray]:
    if stencil == "central":
        half = 0.5 * v
        return half, half
    if stencil != "upwind":
        raise ConfigurationError(f"Unknown transport stencil '{stencil}'")
    s = np.maximum(np.abs(v), sigma)
    return 0.5 * (v + s), 0.5 * (v - s)


def axis_transport(values: np.ndarray, component: np.ndarray, axis: int, h: float,
                   sigma: float = 0.0, stencil: str = "upwind") -> np.ndarray:
    """One-axis term alpha D^-_a w + beta D^+_a w"""
    alpha, beta = _coefficients(component, sigma, stencil)
    return alpha * backward_difference(values, axis, h) + beta * forward_difference(values, axis, h)


def transport(values: np.ndarray, velocity: np.ndarray, h: float,
              sigma: float = 0.0, stencil: str = "upwind") -> np.ndarray:
    """
    B(V, sigma) applied to values

    Args:
        values: (*shape) array
        velocity: (d, *shape) array
    """
    dim = velocity.shape[0]
    out = np.zeros(values.shape)
    for a in range(dim):
        out += axis_transport(values, velocity[a], values.ndim - dim + a, h, sigma, stencil)
    return out


def transport_transpose(values: np.ndarray, velocity: np.ndarray, h: float,
                        sigma: float = 0.0, stencil: str = "upwind") -> np.ndarray:
    """B(V, sigma)^T applied to values; -B^T m discretizes div(V m) conservatively"""
    dim = velocity.shape[0]
    out = np.zeros(values.shape)
    for a in range(dim):
        axis = values.ndim - dim + a
        alpha, beta = _coefficients(velocity[a], sigma, stencil)
        out -= forward_difference(alpha * values, axis, h) + backward_difference(beta * values, axis, h)
    return out


def max_speeds(velocity: np.ndarray, dim: int) -> np.ndarray:
    """Per-component sup |V_a| of a (..., d, *shape) velocity array"""
    comp_axis = velocity.ndim - dim - 1
    moved = np.moveaxis(velocity, comp_axis, 0).reshape(velocity.shape[comp_axis], -1)
    return np.max(np.abs(moved), axis=1)


def stable_dt(speeds: np.ndarray, h: float, sigma: float = 0.0, safety: float = 1.0) -> float:
    """Largest dt with dt * sum_a max(|V_a|, sigma) / h <= safety"""
    total = float(np.sum(np.maximum(speeds, sigma)))
    return np.inf if total <= 0.0 else safety * h / total


def check_cfl(dt: float, speeds: np.ndarray, h: float, sigma: float = 0.0, safety: float = 1.0):
    """
    Enforce the monotonicity condition dt * sum_a max(|V_a|, sigma) / h <= 1

    Raises:
        CFLViolationError: carries the offending and a suggested dt
    """
    limit = stable_dt(speeds, h, sigma)
    if dt > limit * (1.0 + 1e-12):
        raise CFLViolationError(dt, stable_dt(speeds, h, sigma, safety))
