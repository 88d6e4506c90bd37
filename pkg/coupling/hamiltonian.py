"""
Hamiltonian Module
Hamiltonians H(x, p) with analytic p-derivatives up to third order.

Evaluators are vectorized: x and p have shape (..., d); results have shape
(...), (..., d) and (..., d, d).
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HamiltonianSpec:
    """Hamiltonian with gradient, Hessian and third-derivative contraction in p"""
    name: str
    value: ArrayFn
    gradient_p: ArrayFn
    hessian_p: ArrayFn
    third_contract: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    lipschitz_bound: float
    potential_sup: float = 0.0

    def at_zero_sup(self) -> float:
        """sup_x |H(x, 0)|"""
        return self.potential_sup


def relativistic_hamiltonian(potential: float = 0.1) -> HamiltonianSpec:
    """
    H(x, p) = sqrt(1 + |p|^2) - 1 + potential * cos(2 pi x_1)

    Globally Lipschitz in p with |D_p H| < 1 and a positive definite Hessian
    (I - p p^T / s^2) / s, s = sqrt(1 + |p|^2).
    """

    def _s(p):
        return np.sqrt(1.0 + np.sum(p * p, axis=-1))

    def value(x, p):
        x = np.asarray(x, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        out = _s(p) - 1.0
        if potential:
            out = out + potential * np.cos(2.0 * np.pi * x[..., 0])
        return out

    def gradient_p(x, p):
        p = np.asarray(p, dtype=np.float64)
        return p / _s(p)[..., None]

    def hessian_p(x, p):
        p = np.asarray(p, dtype=np.float64)
        s = _s(p)[..., None, None]
        eye = np.eye(p.shape[-1])
        outer = p[..., :, None] * p[..., None, :]
        return (eye - outer / s ** 2) / s

    def third_contract(x, p, q):
        # D^3 H [q, q] as a d-vector
        p = np.asarray(p, dtype=np.float64)
        q = np.asarray(q, dtype=np.float64)
        s = _s(p)[..., None]
        pq = np.sum(p * q, axis=-1)[..., None]
        qq = np.sum(q * q, axis=-1)[..., None]
        return -(2.0 * q * pq + p * qq) / s ** 3 + 3.0 * p * pq ** 2 / s ** 5

    name = "relativistic" if potential else "relativistic-potential-free"
    return HamiltonianSpec(
        name=name,
        value=value,
        gradient_p=gradient_p,
        hessian_p=hessian_p,
        third_contract=third_contract,
        lipschitz_bound=1.0,
        potential_sup=abs(potential),
    )
