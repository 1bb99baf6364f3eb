"""Q-Wiener noise diagonal in the sine eigenbasis.

Increments over a step of length ``tau`` are ``Delta W = sum_k sqrt(q_k tau) xi_k e_k``
with independent standard normal ``xi``.  Draws come from a Philox generator
keyed by ``(seed, path_id, refinement level)``, so every path (and every
refinement of it) is reproducible on its own, independently of how paths are
distributed over workers.

Refinement halves the step by Brownian-bridge sampling: in standardized units
a coarse increment ``b`` splits as ``b/2 + sqrt(tau)/2 z`` and
``b/2 - sqrt(tau)/2 z``.  A factor ``2**r`` applies this ``r`` times, so
refining by 4 equals refining twice by 2 bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import struct

import numpy as np

from .errors import AssumptionViolation, TruncationError
from .wavelets import mixed_matrix, solve_mass

PATH_MAGIC = b"ROTHEWAVE-PATH01"
_HEADER = struct.Struct("<qqQqqd")   # K, N, seed, path_id, level, T


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.T / self.N

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass(frozen=True)
class CovarianceSpec:
    """``q_k = amplitude * k**-rho`` for ``k = 1 .. K``."""

    rho: float
    K: int = 512
    beta_target: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if not self.rho > 2 * self.beta_target - 1:
            raise AssumptionViolation(
                f"rho={self.rho} does not exceed 2*beta-1={2 * self.beta_target - 1}; "
                "the weighted Hilbert-Schmidt norm diverges")

    @property
    def q(self) -> np.ndarray:
        return self.amplitude * np.arange(1, self.K + 1, dtype=float) ** -self.rho

    def with_K(self, K: int) -> "CovarianceSpec":
        return CovarianceSpec(self.rho, K, self.beta_target, self.amplitude)


def hs_norm_parts(spec: CovarianceSpec, beta: float) -> tuple[float, float]:
    """Head sum ``sum_{k<=K} lambda_k**(beta-1) q_k`` and an integral bound of the tail."""
    expo = 2 * beta - 1 - spec.rho
    if expo >= 0:
        raise AssumptionViolation(
            f"rho={spec.rho} <= 2*beta-1={2 * beta - 1}: the series diverges")
    k = np.arange(1, spec.K + 1, dtype=float)
    head = float(np.sum((k * np.pi) ** (2 * beta - 2) * spec.q))
    tail = spec.amplitude * np.pi ** (2 * beta - 2) * spec.K ** expo / (-expo)
    return head, float(tail)


def hs_weighted_norm(spec: CovarianceSpec, beta: float,
                     tail_rtol: float | None = 0.01) -> float:
    """Upper bound of ``||A**((beta-1)/2) Q**(1/2)||_HS``.

    Returns ``sqrt(head + tail)`` where the tail beyond ``K`` is bounded by the
    integral test.  Raises :class:`TruncationError` when the tail bound
    exceeds ``tail_rtol`` times the head (pass ``None`` to skip the check).
    """
    head, tail = hs_norm_parts(spec, beta)
    if tail_rtol is not None and tail > tail_rtol * head:
        raise TruncationError(
            f"tail bound {tail:.3e} exceeds {tail_rtol:g} x head {head:.3e}; increase K")
    return math.sqrt(head + tail)


def _generator(seed: int, path_id: int, level: int) -> np.random.Generator:
    key = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, path_id, level])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realization of the standardized draws ``xi`` on a time grid.

    ``xi`` has shape ``(N, K)``; ``level`` counts the halvings applied to the
    root path sampled by :func:`sample_path`.
    """

    spec: CovarianceSpec
    grid: TimeGrid
    seed: int
    path_id: int
    xi: np.ndarray
    level: int = 0
    _root_N: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.xi.shape != (self.grid.N, self.spec.K):
            raise ValueError(f"xi has shape {self.xi.shape}, "
                             f"expected {(self.grid.N, self.spec.K)}")
        self.xi.setflags(write=False)

    @property
    def increments(self) -> np.ndarray:
        """Spectral coefficients of ``Delta W^n``, shape ``(N, K)``."""
        return self.xi * np.sqrt(self.spec.q * self.grid.tau)

    @property
    def brownian(self) -> np.ndarray:
        """Per-mode standard Brownian increments ``sqrt(tau) xi``."""
        return self.xi * math.sqrt(self.grid.tau)


def sample_path(spec: CovarianceSpec, grid: TimeGrid, seed: int, path_id: int = 0) -> NoisePath:
    xi = _generator(seed, path_id, 0).standard_normal((grid.N, spec.K))
    return NoisePath(spec, grid, seed, path_id, xi, 0, grid.N)


def refine_path(path: NoisePath, factor: int) -> NoisePath:
    """Split every step into ``factor`` steps with the same summed increment."""
    if factor < 2 or factor & (factor - 1):
        raise ValueError(f"refinement factor must be a power of 2 >= 2, got {factor}")
    out = path
    while factor > 1:
        out = _halve(out)
        factor //= 2
    return out


def _halve(path: NoisePath) -> NoisePath:
    level = path.level + 1
    z = _generator(path.seed, path.path_id, level).standard_normal(path.xi.shape)
    xi = np.empty((2 * path.grid.N, path.spec.K))
    # standardized: xi_1 = (xi + z)/sqrt(2), xi_2 = sqrt(2) xi - xi_1
    s2 = math.sqrt(2.0)
    first = (path.xi + z) / s2
    xi[0::2] = first
    xi[1::2] = s2 * path.xi - first
    return NoisePath(path.spec, path.grid.refine(2), path.seed, path.path_id, xi,
                     level, path._root_N)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` steps (axis ``-2``)."""
    shape = increments.shape
    if shape[-2] % factor:
        raise ValueError("factor must divide the number of steps")
    return increments.reshape(shape[:-2] + (shape[-2] // factor, factor, shape[-1])).sum(axis=-2)


def increment_in_SJ(path: NoisePath, n: int, J: int) -> np.ndarray:
    """Load vector ``b_j = (Delta W^n, phi_{J,j})`` for step ``n`` (1-based)."""
    if not 1 <= n <= path.grid.N:
        raise ValueError(f"step index {n} outside 1..{path.grid.N}")
    return mixed_matrix(J, path.spec.K) @ path.increments[n - 1]


def project_increment(path: NoisePath, n: int, J: int) -> np.ndarray:
    """Hat coefficients of ``P_J Delta W^n``."""
    return solve_mass(J, increment_in_SJ(path, n, J))


def dump_path(path: NoisePath, file) -> None:
    """Write the path as magic, header and raw little-endian float64 ``xi``."""
    header = _HEADER.pack(path.spec.K, path.grid.N, path.seed & 0xFFFFFFFFFFFFFFFF,
                          path.path_id, path.level, path.grid.T)
    data = np.ascontiguousarray(path.xi, dtype="<f8").tobytes()
    if hasattr(file, "write"):
        file.write(PATH_MAGIC + header + data)
    else:
        with open(file, "wb") as fh:
            fh.write(PATH_MAGIC + header + data)


def load_path(file, spec: CovarianceSpec) -> NoisePath:
    """Read a dump written by :func:`dump_path`; ``spec`` supplies ``q``."""
    if hasattr(file, "read"):
        raw = file.read()
    else:
        with open(file, "rb") as fh:
            raw = fh.read()
    if raw[:16] != PATH_MAGIC:
        raise ValueError("not a noise path dump (bad magic)")
    K, N, seed, path_id, level, T = _HEADER.unpack_from(raw, 16)
    if K != spec.K:
        raise ValueError(f"dump has K={K}, spec has K={spec.K}")
    xi = np.frombuffer(raw, dtype="<f8", offset=16 + _HEADER.size).reshape(N, K).copy()
    return NoisePath(spec, TimeGrid(T, N), seed, path_id, xi, level, N >> level)
