"""Backward-Euler Galerkin solver for the discrete stochastic convolution.

With hats ``phi_{J,j}`` the step ``w^n + tau A_J w^n = w^{n-1} + P_J Delta W^n``
reads ``(M + tau S) c^n = M c^{n-1} + b^n`` where ``b^n_j = (Delta W^n, phi_{J,j})``.
All routines accept leading batch axes (one row per sample path).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .noise import NoisePath
from .spectral import eigenvalues
from .wavelets import banded_upper, gram_matrix, mixed_matrix, stiffness_matrix


@dataclass(frozen=True)
class LinearStepSystem:
    """Banded Cholesky factor of ``M + tau S`` on mesh ``2**-J``."""

    J: int
    tau: float
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        n, h = self.dim, self.h
        ab = banded_upper(2 * h / 3 + 2 * self.tau / h, h / 6 - self.tau / h, n)
        object.__setattr__(self, "factor", linalg.cholesky_banded(ab))

    @property
    def dim(self) -> int:
        return (1 << self.J) - 1

    @property
    def h(self) -> float:
        return 2.0 ** -self.J

    def matrix(self):
        return gram_matrix(self.J) + self.tau * stiffness_matrix(self.J)

    def apply_mass(self, c: np.ndarray) -> np.ndarray:
        """``M c`` along the last axis."""
        h = self.h
        out = (2 * h / 3) * c
        out[..., 1:] += (h / 6) * c[..., :-1]
        out[..., :-1] += (h / 6) * c[..., 1:]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve along the last axis (any leading batch shape)."""
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.reshape(-1, self.dim).T
        sol = linalg.cho_solve_banded((self.factor, False), flat, check_finite=False)
        return sol.T.reshape(rhs.shape)

    def factorization_residual(self) -> float:
        """Relative residual of the factorization on a fixed random vector."""
        x = np.random.default_rng(0).standard_normal(self.dim)
        b = self.matrix() @ x
        return float(np.linalg.norm(self.matrix() @ self.solve(b) - b) / np.linalg.norm(b))


@lru_cache(maxsize=64)
def linear_system(J: int, tau: float) -> LinearStepSystem:
    return LinearStepSystem(J, tau)


def step_w(system: LinearStepSystem, prev: np.ndarray, load: np.ndarray) -> np.ndarray:
    prev = np.asarray(prev, dtype=float)
    load = np.asarray(load, dtype=float)
    if prev.shape[-1] != system.dim or load.shape[-1] != system.dim:
        raise ValueError("dimension mismatch with the step system")
    return system.solve(system.apply_mass(prev) + load)


def galerkin_loads(increments: np.ndarray, J: int) -> np.ndarray:
    """``(Delta W^n, phi_{J,j})`` for spectral increments of shape ``(..., K)``."""
    G = mixed_matrix(J, increments.shape[-1])
    return increments @ G.T


def run_linear_increments(increments: np.ndarray, tau: float, J: int) -> np.ndarray:
    """Trajectory ``w_J^0 .. w_J^N`` (hat coefficients) for spectral increments.

    ``increments`` has shape ``(..., N, K)``; the result ``(..., N+1, 2**J-1)``.
    """
    system = linear_system(J, tau)
    loads = galerkin_loads(np.asarray(increments, dtype=float), J)
    N = loads.shape[-2]
    out = np.zeros(loads.shape[:-2] + (N + 1, system.dim))
    for n in range(1, N + 1):
        out[..., n, :] = step_w(system, out[..., n - 1, :], loads[..., n - 1, :])
    return out


def run_linear(path: NoisePath, J: int) -> np.ndarray:
    return run_linear_increments(path.increments, path.grid.tau, J)


def spectral_reference_increments(increments: np.ndarray, tau: float) -> np.ndarray:
    """Exact discrete recursion ``w^n = (1 + tau lambda)^-1 (w^{n-1} + Delta W^n)``."""
    increments = np.asarray(increments, dtype=float)
    r = 1.0 / (1.0 + tau * eigenvalues(increments.shape[-1]))
    N = increments.shape[-2]
    out = np.zeros(increments.shape[:-2] + (N + 1, increments.shape[-1]))
    for n in range(1, N + 1):
        out[..., n, :] = r * (out[..., n - 1, :] + increments[..., n - 1, :])
    return out


def spectral_discrete_reference(path: NoisePath) -> np.ndarray:
    return spectral_reference_increments(path.increments, path.grid.tau)


def mr_error(wJ: np.ndarray, ref: np.ndarray, J: int) -> np.ndarray:
    """``||w_J^n - w^n||_{L2}`` for hat coefficients ``wJ`` and spectral ``ref``.

    Uses ``||a - b||^2 = a^T M a - 2 a^T G b + b^T b`` with the closed-form
    mixed products ``G``; shapes ``(..., 2**J-1)`` and ``(..., K)``.
    """
    system = linear_system(J, 1.0)
    wJ = np.asarray(wJ, dtype=float)
    ref = np.asarray(ref, dtype=float)
    G = mixed_matrix(J, ref.shape[-1])
    sq = (np.sum(wJ * system.apply_mass(wJ), axis=-1)
          - 2 * np.sum(wJ * (ref @ G.T), axis=-1)
          + np.sum(ref * ref, axis=-1))
    # cancellation can push tiny values slightly negative
    return np.sqrt(np.maximum(sq, 0.0))


def discrete_resolvent_gap(v, J: int, tau: float, N: int) -> float:
    """``(tau sum_n ||r(tau A_J)^n P_J v - r(tau A)^n v||^2)**(1/2)`` for a spectral field ``v``."""
    from .wavelets import project_PJ
    system = linear_system(J, tau)
    c = project_PJ(v, J)
    r = 1.0 / (1.0 + tau * eigenvalues(v.K))
    ref = np.array(v.coeffs, dtype=float)
    total = 0.0
    for _ in range(N):
        c = system.solve(system.apply_mass(c))
        ref = r * ref
        total += tau * float(mr_error(c, ref, J)) ** 2
    return float(np.sqrt(total))
