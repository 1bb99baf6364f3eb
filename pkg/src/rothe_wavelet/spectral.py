"""Eigen-expansion model of the Dirichlet Laplacian on (0, 1).

Everything here is diagonal in the sine basis ``e_k(x) = sqrt(2) sin(k pi x)``
with eigenvalues ``lambda_k = (k pi)**2``, which makes the functions below
usable as exact oracles for the wavelet solvers.

Nonlinear terms are applied pseudo-spectrally on the grid
``x_j = j / (2K)`` (``j = 1 .. 2K-1``) via the type-I discrete sine transform.
The grid transform is orthogonal, so the projected Nemytskii map keeps the
Lipschitz constant of ``f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import fft

from .errors import AssumptionViolation

FIXED_POINT_TOL = 1e-12


def eigenvalue(k: int) -> float:
    if k < 1:
        raise ValueError(f"eigen index must be >= 1, got {k}")
    return (k * math.pi) ** 2


def eigenvalues(K: int) -> np.ndarray:
    return (np.arange(1, K + 1) * np.pi) ** 2


def eval_eigenfunction(k: int, x):
    if k < 1:
        raise ValueError(f"eigen index must be >= 1, got {k}")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    out = math.sqrt(2.0) * np.sin(k * np.pi * x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients ``c_1 .. c_K`` of a function in the sine eigenbasis.

    ``coeffs`` may carry leading batch axes (e.g. one row per sample path);
    the last axis is always the mode axis.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 0 or c.shape[-1] < 1:
            raise ValueError("a spectral field needs at least one mode")
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def mode(cls, k: int, K: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(K)
        c[k - 1] = amplitude
        return cls(c)

    def l2_norm(self):
        return np.sqrt(np.sum(self.coeffs ** 2, axis=-1))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        k = np.arange(1, self.K + 1)
        return math.sqrt(2.0) * np.sin(np.multiply.outer(x, k) * np.pi) @ self.coeffs

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(a * self.coeffs)

    __rmul__ = __mul__


def _multiply(field_: SpectralField, factor: np.ndarray) -> SpectralField:
    return SpectralField(field_.coeffs * factor)


def fractional_apply(s: float, field_: SpectralField) -> SpectralField:
    """``A**s`` applied mode by mode."""
    return _multiply(field_, eigenvalues(field_.K) ** s)


def hdot_norm(beta: float, field_: SpectralField):
    """Norm of ``A**(beta/2) v``."""
    lam = eigenvalues(field_.K)
    return np.sqrt(np.sum(lam ** beta * field_.coeffs ** 2, axis=-1))


def semigroup_apply(t: float, field_: SpectralField) -> SpectralField:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    return _multiply(field_, np.exp(-eigenvalues(field_.K) * t))


def euler_rational_apply(tau: float, n: int, field_: SpectralField) -> SpectralField:
    """``r(tau A)**n`` with ``r(s) = 1/(1+s)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _multiply(field_, (1.0 + tau * eigenvalues(field_.K)) ** (-float(n)))


# -- nonlinearities -----------------------------------------------------------

def _rational(u):
    return u / (1.0 + u * u)


NONLINEARITIES = {
    # name: (pointwise map, derivative, Lipschitz constant of the unit-amplitude map)
    "sin": (np.sin, np.cos, 1.0),
    "rational": (_rational, lambda u: (1.0 - u * u) / (1.0 + u * u) ** 2, 1.0),
    "linear": (lambda u: u, lambda u: np.ones_like(u), 1.0),
    "zero": (np.zeros_like, np.zeros_like, 0.0),
}


@dataclass(frozen=True)
class ModelParams:
    """Problem data: truncation level and the pointwise nonlinearity ``f``.

    ``f(u) = amplitude * base(u)``; ``lipschitz_L`` is derived from the
    analytic constant of ``base``.  Passing an inconsistent ``lipschitz_L``
    is an error.
    """

    K: int = 512
    nonlinearity: str = "sin"
    amplitude: float = 1.0
    lipschitz_L: float | None = None
    quad_factor: int = 2
    _f: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}; "
                             f"choose from {sorted(NONLINEARITIES)}")
        base, _, lip = NONLINEARITIES[self.nonlinearity]
        analytic = abs(self.amplitude) * lip
        if self.lipschitz_L is not None and not math.isclose(
                self.lipschitz_L, analytic, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"lipschitz_L={self.lipschitz_L} does not match the "
                             f"analytic constant {analytic} of {self.nonlinearity!r}")
        object.__setattr__(self, "lipschitz_L", analytic)
        if self.quad_factor < 2:
            raise ValueError("quad_factor must be >= 2")

    def f(self, u):
        base = NONLINEARITIES[self.nonlinearity][0]
        if self.amplitude == 1.0:
            return base(u)
        return self.amplitude * base(u)

    def df(self, u):
        return self.amplitude * NONLINEARITIES[self.nonlinearity][1](u)

    @property
    def is_zero(self) -> bool:
        return self.nonlinearity == "zero" or self.amplitude == 0.0

    @property
    def grid_size(self) -> int:
        """Number of sine-grid intervals used for pseudo-spectral products."""
        return self.quad_factor * self.K


def sine_grid(params: ModelParams) -> np.ndarray:
    n = params.grid_size
    return np.arange(1, n) / n


def to_grid(coeffs: np.ndarray, n_grid: int) -> np.ndarray:
    """Values of ``sum_k c_k e_k`` at ``j / n_grid``; batch axes allowed."""
    K = coeffs.shape[-1]
    pad = np.zeros(coeffs.shape[:-1] + (n_grid - 1,))
    pad[..., :K] = coeffs
    return fft.dst(pad, type=1, axis=-1) / math.sqrt(2.0)


def from_grid(values: np.ndarray, K: int) -> np.ndarray:
    """Discrete projection of grid values onto the first ``K`` modes."""
    n_grid = values.shape[-1] + 1
    return fft.dst(values, type=1, axis=-1)[..., :K] / (math.sqrt(2.0) * n_grid)


def nonlinear_coeffs(params: ModelParams, coeffs: np.ndarray,
                     extra_grid: np.ndarray | None = None) -> np.ndarray:
    """Spectral coefficients of ``f(u + extra)`` with ``u`` given spectrally.

    ``extra_grid`` holds values of an additional field on the sine grid (used
    to insert a piecewise-linear stochastic convolution).
    """
    if params.is_zero:
        return np.zeros_like(coeffs)
    grid = to_grid(coeffs, params.grid_size)
    if extra_grid is not None:
        grid = grid + extra_grid
    return from_grid(params.f(grid), coeffs.shape[-1])


# -- time stepping ------------------------------------------------------------

def check_step(tau: float, params: ModelParams) -> None:
    if tau * params.lipschitz_L >= 0.5:
        raise AssumptionViolation(
            f"tau*L_f = {tau * params.lipschitz_L:g} violates tau*L_f < 1/2")


@dataclass
class FixedPointLog:
    """Iteration counts of the implicit solves (one entry per time step)."""

    iterations: list = field(default_factory=list)


def implicit_step(params: ModelParams, tau: float, rhs: np.ndarray,
                  guess: np.ndarray, extra_grid=None, tol: float = FIXED_POINT_TOL,
                  max_iter: int = 500) -> tuple[np.ndarray, int]:
    """Solve ``u + tau A u - tau P_K f(u + extra) = rhs`` by Picard iteration.

    The contraction factor is at most ``tau L_f / (1 + tau lambda_1)``.  The
    iteration stops once the correction falls below ``tol`` times the first
    correction (or below 1e-300 in absolute terms).  Batch axes are handled
    jointly; the returned count is the maximum over the batch.
    """
    lam = eigenvalues(rhs.shape[-1])
    resolvent = 1.0 / (1.0 + tau * lam)
    if params.is_zero:
        return rhs * resolvent, 1
    u = guess
    first = None
    for it in range(1, max_iter + 1):
        new = (rhs + tau * nonlinear_coeffs(params, u, extra_grid)) * resolvent
        delta = float(np.max(np.sqrt(np.sum((new - u) ** 2, axis=-1))))
        u = new
        if first is None:
            first = max(delta, 1e-300)
        if delta <= tol * first or delta <= 1e-300:
            return u, it
    raise RuntimeError(f"fixed-point iteration did not converge in {max_iter} steps")


def spectral_backward_euler(params: ModelParams, tau: float, increments: np.ndarray,
                            u0: np.ndarray, *, extra_grid=None, store_every: int = 1,
                            log: FixedPointLog | None = None) -> np.ndarray:
    """Semi-implicit backward Euler in the truncated eigenbasis.

    ``increments`` has shape ``(..., N, K)`` (Wiener increments per step and
    mode); ``u0`` has shape ``(..., K)``.  ``extra_grid`` is an optional
    callable ``n -> grid values`` added inside ``f`` at step ``n``.  Returns the
    trajectory at steps ``0, store_every, 2*store_every, ...``.
    """
    check_step(tau, params)
    increments = np.asarray(increments, dtype=float)
    N = increments.shape[-2]
    if N % store_every:
        raise ValueError("store_every must divide the number of steps")
    u = np.broadcast_to(np.asarray(u0, dtype=float),
                        increments.shape[:-2] + increments.shape[-1:]).copy()
    out = [u.copy()]
    for n in range(1, N + 1):
        rhs = u + increments[..., n - 1, :]
        extra = extra_grid(n) if extra_grid is not None else None
        u, its = implicit_step(params, tau, rhs, u, extra)
        if log is not None:
            log.iterations.append(its)
        if n % store_every == 0:
            out.append(u.copy())
    return np.stack(out, axis=-2)


# -- exact stochastic convolution ---------------------------------------------

def convolution_moments(lam: np.ndarray, tau: float):
    """Per-mode covariance of ``(int e^{-lam(t-s)} dB, Delta B)`` over one step.

    Returns ``(var1, var2, cov)``.  Small ``lam * tau`` uses series expansions.
    """
    lam = np.asarray(lam, dtype=float)
    x = lam * tau
    small = x < 1e-6
    xs = np.where(small, 1.0, x)
    # (1 - e^{-2x}) / (2 lam) and (1 - e^{-x}) / lam written via expm1
    var1 = np.where(small, tau * (1.0 - x + 2.0 * x * x / 3.0),
                    -np.expm1(-2.0 * xs) / (2.0 * xs) * tau)
    cov = np.where(small, tau * (1.0 - x / 2.0 + x * x / 6.0),
                   -np.expm1(-xs) / xs * tau)
    var2 = np.full_like(lam, tau)
    return var1, var2, cov


def exact_convolution_step(tau: float, prev: SpectralField, q: np.ndarray,
                           rng: np.random.Generator,
                           unit_increments: np.ndarray | None = None):
    """Exact one-step sample of the stochastic convolution in each mode.

    ``unit_increments`` are the standard Brownian increments ``Delta B_k``
    (variance ``tau``) the Euler schemes see for this step; the convolution
    integral is sampled conditionally on them, so both are jointly exact.
    When omitted, ``Delta B`` is sampled as well.  Returns the new field and
    the ``(conv_integral, Delta B)`` coupling record.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    c = prev.coeffs
    K = c.shape[-1]
    lam = eigenvalues(K)
    var1, var2, cov = convolution_moments(lam, tau)
    cond_var = var1 - cov * cov / var2
    if np.any(cond_var < -1e-14 * var1):
        raise ValueError("convolution covariance is not positive semidefinite")
    cond_var = np.maximum(cond_var, 0.0)
    shape = c.shape
    if unit_increments is None:
        unit_increments = rng.standard_normal(shape) * math.sqrt(tau)
    integral = cov / var2 * unit_increments + np.sqrt(cond_var) * rng.standard_normal(shape)
    new = np.exp(-lam * tau) * c + np.sqrt(q) * integral
    return SpectralField(new), (integral, unit_increments)


def mild_reference(params: ModelParams, tau_fine: float, increments_fine: np.ndarray,
                   u0: np.ndarray, store_every: int) -> np.ndarray:
    """Fine-step backward Euler used as a proxy for the mild solution.

    ``increments_fine`` must come from the same Brownian path as the study
    grids (see :func:`rothe_wavelet.noise.refine_path`); ``store_every`` is the
    refinement factor to the coarsest node spacing that is kept.
    """
    return spectral_backward_euler(params, tau_fine, increments_fine, u0,
                                   store_every=store_every)
