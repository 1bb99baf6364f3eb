"""Piecewise-linear biorthogonal wavelets on (0, 1) with Dirichlet conditions.

Indexing
--------
``WaveletIndex(0, k)`` (``k = 0, 1, 2``) are the hat functions of mesh 1/4.
``WaveletIndex(l, k)`` with ``l >= 1`` and ``0 <= k < 2**(l+1)`` are wavelets
centred at the odd nodes of mesh ``2**-(l+2)``.  Hence the span of all
indices with level ``<= J - 2`` is the space ``S_J`` of hat functions of mesh
``2**-J`` (dimension ``2**J - 1``).

Wavelets are obtained from fine hats by one lifting step with two vanishing
moments and are normalized in L2.  Coefficient vectors are stored in a flat
layout (see :mod:`rothe_wavelet._kernels_py`).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy import linalg, sparse

from . import kernels
from .filters import load_table
from .spectral import SpectralField

DROP_TOL = 1e-14
MIN_LEVEL = 2          # S_2 = span of the three root hats
ORDER = 2


class WaveletIndex(NamedTuple):
    level: int
    k: int


def level_size(level: int) -> int:
    """Number of basis functions with index level ``level``."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return 3 if level == 0 else 1 << (level + 1)


def is_valid(lam: WaveletIndex) -> bool:
    return lam.level >= 0 and 0 <= lam.k < level_size(lam.level)


def _check(lam) -> WaveletIndex:
    lam = WaveletIndex(*lam)
    if not is_valid(lam):
        raise ValueError(f"invalid wavelet index {tuple(lam)}")
    return lam


def flat_index(lam) -> int:
    lam = _check(lam)
    return kernels.level_offset(lam.level) + lam.k


def index_of_flat(i: int) -> WaveletIndex:
    if i < 0:
        raise ValueError("flat index must be nonnegative")
    if i < 3:
        return WaveletIndex(0, i)
    level = (i + 1).bit_length() - 2
    return WaveletIndex(level, i - kernels.level_offset(level))


def parent(lam) -> WaveletIndex | None:
    lam = _check(lam)
    if lam.level == 0:
        return None
    return WaveletIndex(lam.level - 1, lam.k // 2)


def children(lam) -> set[WaveletIndex]:
    """``{(j+1, 2k), (j+1, 2k+1)}`` clipped to valid positions."""
    lam = _check(lam)
    out = set()
    for k in (2 * lam.k, 2 * lam.k + 1):
        child = WaveletIndex(lam.level + 1, k)
        if is_valid(child) and parent(child) == lam:
            out.add(child)
    return out


def smallest_tree(support: Iterable) -> set[WaveletIndex]:
    """Closure of ``support`` under taking parents."""
    out: set[WaveletIndex] = set()
    for lam in support:
        node = _check(lam)
        while node is not None and node not in out:
            out.add(node)
            node = parent(node)
    return out


def support_interval(lam) -> tuple[float, float]:
    """Closed support of the basis function ``lam``."""
    lam = _check(lam)
    if lam.level == 0:
        return (lam.k / 4.0, (lam.k + 2) / 4.0)
    h = 2.0 ** -(lam.level + 2)
    m = level_size(lam.level)
    if lam.k == 0:
        return (0.0, 6 * h)
    if lam.k == m - 1:
        return (1.0 - 6 * h, 1.0)
    node = 2 * lam.k + 1
    return ((node - 3) * h, (node + 3) * h)


# -- multiresolution space ----------------------------------------------------

@dataclass(frozen=True)
class MultiresSpace:
    """The hat-function space ``S_J`` on mesh ``2**-J``."""

    J: int

    def __post_init__(self):
        if self.J < MIN_LEVEL:
            raise ValueError(f"J must be >= {MIN_LEVEL}")

    @property
    def dim(self) -> int:
        return (1 << self.J) - 1

    @property
    def order(self) -> int:
        return ORDER

    @property
    def h(self) -> float:
        return 2.0 ** -self.J

    @property
    def max_index_level(self) -> int:
        return self.J - 2

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.dim + 1) * self.h

    def indices(self) -> list[WaveletIndex]:
        return [WaveletIndex(lev, k) for lev in range(self.max_index_level + 1)
                for k in range(level_size(lev))]


def ambient_level(n: int) -> int:
    """Level ``J`` with ``dim S_J == n``."""
    J = (n + 1).bit_length() - 1
    if n < 3 or (1 << J) - 1 != n:
        raise ValueError(f"length {n} is not 2**J - 1 with J >= {MIN_LEVEL}")
    return J


# -- transforms ---------------------------------------------------------------

class TransformCounter:
    """Counts elementary coefficient updates performed by the transforms."""

    def __init__(self):
        self.count = 0

    def add(self, J: int) -> None:
        # every level touches each of its m details and m-1 coarse values a
        # fixed number of times (predict: 2, update: 2, scale: 1)
        for lev in range(1, J - 1):
            m = level_size(lev)
            self.count += 3 * m + 2 * (m - 1)
        self.count += 3


@lru_cache(maxsize=None)
def _scale_tables(J: int):
    table = load_table()
    mi = float(table["mass_interior"][0])
    mb = float(table["mass_boundary"][0])
    mh = float(table["mass_hat"][0])
    levels = np.arange(max(J - 1, 1))
    hf = 2.0 ** -(levels + 2.0)
    scale_int = np.sqrt(mi * hf)
    scale_bnd = np.sqrt(mb * hf)
    scale_hat = math.sqrt(mh * 0.25)
    ub0, ub1 = (float(v) for v in table["update_left"])
    return scale_int, scale_bnd, scale_hat, ub0, ub1


def _as_vector(x, J=None) -> tuple[np.ndarray, int]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional coefficient vector")
    level = ambient_level(x.size)
    if J is not None and level != J:
        raise ValueError(f"length {x.size} does not match dim S_{J} = {2 ** J - 1}")
    return x, level


def fwt_array(nodal, J: int | None = None, counter: TransformCounter | None = None,
              backend=None) -> np.ndarray:
    """Hat coefficients on mesh ``2**-J`` -> flat normalized wavelet coefficients."""
    x, J = _as_vector(nodal, J)
    impl = backend or kernels
    out = impl.lift_forward(x, J, *_scale_tables(J))
    if counter is not None:
        counter.add(J)
    return np.asarray(out)


def ifwt_array(coeffs, J: int | None = None, counter: TransformCounter | None = None,
               backend=None) -> np.ndarray:
    x, J = _as_vector(coeffs, J)
    impl = backend or kernels
    out = impl.lift_inverse(x, J, *_scale_tables(J))
    if counter is not None:
        counter.add(J)
    return np.asarray(out)


def transpose_array(loads, J: int | None = None, backend=None) -> np.ndarray:
    """Hat loads ``(g, phi_{J,i})`` -> wavelet loads ``(g, psi_lambda)``."""
    x, J = _as_vector(loads, J)
    impl = backend or kernels
    return np.asarray(impl.lift_transpose(x, J, *_scale_tables(J)))


def fwt(nodal, J: int | None = None, counter=None) -> "WaveletCoeffs":
    """Change of basis from hats of ``S_J`` to wavelets (inverse of :func:`ifwt`)."""
    values = fwt_array(nodal, J, counter)
    return WaveletCoeffs.from_dense(values)


def ifwt(coeffs, J: int | None = None, counter=None) -> np.ndarray:
    """Wavelet coefficients (``WaveletCoeffs`` or flat array) -> hat coefficients."""
    if isinstance(coeffs, WaveletCoeffs):
        if J is not None and J != coeffs.J:
            coeffs = coeffs.embed(J)
        coeffs = coeffs.values
    return ifwt_array(coeffs, J, counter)


@lru_cache(maxsize=16)
def synthesis_matrix(J: int) -> np.ndarray:
    """Dense matrix ``T`` with ``psi_lambda = sum_j T[j, lambda] phi_{J,j}``."""
    n = (1 << J) - 1
    T = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        T[:, i] = ifwt_array(e, J)
        e[i] = 0.0
    T.setflags(write=False)
    return T


# -- Galerkin matrices --------------------------------------------------------

def _check_J(J: int) -> int:
    if J < 1:
        raise ValueError("J must be >= 1")
    return J


def gram_matrix(J: int) -> sparse.csr_matrix:
    """Tridiagonal mass matrix of the hats of mesh ``2**-J``."""
    n = (1 << _check_J(J)) - 1
    h = 2.0 ** -J
    return sparse.diags([np.full(n - 1, h / 6), np.full(n, 2 * h / 3),
                         np.full(n - 1, h / 6)], [-1, 0, 1], format="csr")


def stiffness_matrix(J: int) -> sparse.csr_matrix:
    n = (1 << _check_J(J)) - 1
    h = 2.0 ** -J
    return sparse.diags([np.full(n - 1, -1 / h), np.full(n, 2 / h),
                         np.full(n - 1, -1 / h)], [-1, 0, 1], format="csr")


def banded_upper(diag: float, off: float, n: int) -> np.ndarray:
    """Upper banded storage of a constant symmetric tridiagonal matrix."""
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = off
    ab[1, :] = diag
    return ab


@lru_cache(maxsize=64)
def _mass_factor(J: int):
    n = (1 << J) - 1
    h = 2.0 ** -J
    return linalg.cholesky_banded(banded_upper(2 * h / 3, h / 6, n))


@lru_cache(maxsize=64)
def _stiff_factor(J: int):
    n = (1 << J) - 1
    h = 2.0 ** -J
    return linalg.cholesky_banded(banded_upper(2 / h, -1 / h, n))


def solve_mass(J: int, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("load vector has non-finite entries")
    return linalg.cho_solve_banded((_mass_factor(J), False), b)


def solve_stiffness(J: int, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("load vector has non-finite entries")
    return linalg.cho_solve_banded((_stiff_factor(J), False), b)


# -- inner products and projectors --------------------------------------------

@lru_cache(maxsize=32)
def mixed_matrix(J: int, K: int) -> np.ndarray:
    """``G[j, k-1] = (e_k, phi_{J,j})`` in closed form.

    ``(e_k, phi_j) = sqrt(2) sin(k pi x_j) h sinc(k pi h / 2)**2``.
    """
    n = (1 << J) - 1
    h = 2.0 ** -J
    x = np.arange(1, n + 1) * h
    k = np.arange(1, K + 1)
    half = k * np.pi * h / 2
    sinc2 = (np.sin(half) / half) ** 2
    G = math.sqrt(2.0) * np.sin(np.outer(x, k) * np.pi) * (h * sinc2)
    G.setflags(write=False)
    return G


_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_rule(npts: int):
    if npts not in _GAUSS_CACHE:
        _GAUSS_CACHE[npts] = np.polynomial.legendre.leggauss(npts)
    return _GAUSS_CACHE[npts]


def cell_quadrature(J: int, npts: int = 5, sub: int = 1):
    """Gauss points/weights per cell of mesh ``2**-J`` (cells split into ``sub`` parts).

    Returns ``(x, w, cell, t)`` with local coordinate ``t in (0, 1)`` inside
    each cell, all flattened.
    """
    xi, wi = gauss_rule(npts)
    ncell = 1 << J
    h = 1.0 / ncell
    t = ((np.arange(sub)[:, None] + (xi[None, :] + 1) / 2) / sub).ravel()
    wt = np.tile(wi / (2 * sub), sub)
    cell = np.repeat(np.arange(ncell), t.size)
    tt = np.tile(t, ncell)
    x = (cell + tt) * h
    w = np.tile(wt, ncell) * h
    return x, w, cell, tt


def hat_loads(J: int, values: np.ndarray, npts: int = 5, sub: int = 1) -> np.ndarray:
    """``(g, phi_{J,j})`` from ``g`` sampled at :func:`cell_quadrature` points."""
    _, w, cell, t = cell_quadrature(J, npts, sub)
    n = (1 << J) - 1
    gw = values * w
    b = np.zeros(n + 2)
    # the left hat of cell c is node c, the right one is node c+1
    np.add.at(b, cell, gw * (1 - t))
    np.add.at(b, cell + 1, gw * t)
    return b[1:-1]


def eval_nodal(c: np.ndarray, J: int, x) -> np.ndarray:
    """Evaluate the hat expansion ``sum_j c_j phi_{J,j}`` at ``x``."""
    n = (1 << J) - 1
    nodes = np.arange(n + 2) / (n + 1)
    vals = np.concatenate(([0.0], np.asarray(c, dtype=float), [0.0]))
    return np.interp(x, nodes, vals)


def project_PJ(field, J: int, npts: int = 5, sub: int = 4) -> np.ndarray:
    """L2-orthogonal projection onto ``S_J``, returned as hat coefficients.

    ``field`` is a :class:`SpectralField` (closed-form loads) or a callable
    on ``[0, 1]`` (Gauss quadrature with ``npts`` points on ``sub`` subcells).
    """
    _check_J(J)
    if isinstance(field, SpectralField):
        b = mixed_matrix(J, field.K) @ field.coeffs
    elif callable(field):
        x, *_ = cell_quadrature(J, npts, sub)
        b = hat_loads(J, np.asarray(field(x), dtype=float), npts, sub)
    else:
        raise TypeError("field must be a SpectralField or a callable")
    return solve_mass(J, b)


def ritz_project(field, J: int) -> np.ndarray:
    """Ritz projection ``R_J`` onto ``S_J`` (Galerkin for ``a(u, v) = (u', v')``).

    For callables the loads ``a(v, phi_j) = (2 v(x_j) - v(x_{j-1}) - v(x_{j+1})) / h``
    are exact for any ``v`` in ``H^1_0``, so ``R_J v`` is the nodal interpolant.
    """
    _check_J(J)
    n = (1 << J) - 1
    h = 2.0 ** -J
    if isinstance(field, SpectralField):
        lam = (np.arange(1, field.K + 1) * np.pi) ** 2
        b = mixed_matrix(J, field.K) @ (lam * field.coeffs)
    elif callable(field):
        v = np.asarray(field(np.arange(n + 2) * h), dtype=float)
        if abs(v[0]) > 1e-12 or abs(v[-1]) > 1e-12:
            raise ValueError("Ritz projection needs v(0) = v(1) = 0")
        b = (2 * v[1:-1] - v[:-2] - v[2:]) / h
    else:
        raise TypeError("field must be a SpectralField or a callable")
    return solve_stiffness(J, b)


def l2_distance(c: np.ndarray, J: int, v: Callable, npts: int = 5, sub: int = 1) -> float:
    """``||v - sum_j c_j phi_{J,j}||_{L2}`` by Gauss quadrature per cell."""
    x, w, *_ = cell_quadrature(J, npts, sub)
    diff = np.asarray(v(x), dtype=float) - eval_nodal(c, J, x)
    return float(np.sqrt(np.sum(w * diff * diff)))


# -- sparse coefficient vectors -----------------------------------------------

class WaveletCoeffs:
    """Sparse wavelet coefficient vector on the index set of ``S_J``.

    Stored densely (flat layout) with a boolean support mask; entries off the
    support are exactly zero.  For tree vectors the support may contain
    ancestors with zero value, since the tree property is a statement about
    the index set.
    """

    __slots__ = ("J", "values", "mask", "tree")

    def __init__(self, J: int, values: np.ndarray, mask: np.ndarray, tree: bool = False):
        values = np.array(values, dtype=float)
        mask = np.array(mask, dtype=bool)
        n = (1 << J) - 1
        if values.shape != (n,) or mask.shape != (n,):
            raise ValueError(f"expected arrays of length {n} for J={J}")
        if not np.all(np.isfinite(values)):
            raise ValueError("wavelet coefficients must be finite")
        values[~mask] = 0.0
        if tree:
            closed = kernels.tree_closure(mask, J)
            if not np.array_equal(closed, mask):
                raise ValueError("support is not a tree")
        values.setflags(write=False)
        mask.setflags(write=False)
        self.J = J
        self.values = values
        self.mask = mask
        self.tree = tree

    # constructors
    @classmethod
    def zeros(cls, J: int, tree: bool = True) -> "WaveletCoeffs":
        n = (1 << J) - 1
        return cls(J, np.zeros(n), np.zeros(n, dtype=bool), tree)

    @classmethod
    def from_dense(cls, values, tree: bool = False,
                   drop_tol: float = DROP_TOL) -> "WaveletCoeffs":
        values = np.asarray(values, dtype=float)
        J = ambient_level(values.size)
        mask = np.abs(values) > drop_tol
        if tree:
            mask = kernels.tree_closure(mask, J)
        return cls(J, values, mask, tree)

    @classmethod
    def from_entries(cls, entries: dict, J: int, tree: bool = False,
                     drop_tol: float = DROP_TOL) -> "WaveletCoeffs":
        n = (1 << J) - 1
        values = np.zeros(n)
        for lam, val in entries.items():
            i = flat_index(lam)
            if i >= n:
                raise ValueError(f"index {tuple(lam)} is outside S_{J}")
            values[i] = val
        mask = np.abs(values) > drop_tol
        if tree:
            mask = kernels.tree_closure(mask, J)
        return cls(J, values, mask, tree)

    # views
    @property
    def entries(self) -> dict[WaveletIndex, float]:
        return {index_of_flat(int(i)): float(self.values[i])
                for i in np.flatnonzero(self.mask)}

    @property
    def support(self) -> set[WaveletIndex]:
        return {index_of_flat(int(i)) for i in np.flatnonzero(self.mask)}

    @property
    def support_size(self) -> int:
        return int(self.mask.sum())

    @property
    def depth(self) -> int:
        """Ambient level needed to represent the support (at least 2)."""
        idx = np.flatnonzero(self.mask)
        if idx.size == 0:
            return MIN_LEVEL
        return index_of_flat(int(idx[-1])).level + 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def is_tree(self) -> bool:
        return bool(np.array_equal(kernels.tree_closure(self.mask, self.J), self.mask))

    def embed(self, J: int) -> "WaveletCoeffs":
        """The same vector viewed in ``S_J`` (``J`` may not drop support)."""
        if J == self.J:
            return self
        n = (1 << J) - 1
        values = np.zeros(n)
        mask = np.zeros(n, dtype=bool)
        m = min(n, self.values.size)
        if J < self.J and self.mask[m:].any():
            raise ValueError("support does not fit into the smaller space")
        values[:m] = self.values[:m]
        mask[:m] = self.mask[:m]
        return WaveletCoeffs(J, values, mask, self.tree)

    def with_tree(self) -> "WaveletCoeffs":
        return WaveletCoeffs(self.J, self.values,
                             kernels.tree_closure(self.mask, self.J), True)

    def __repr__(self):
        return (f"WaveletCoeffs(J={self.J}, support={self.support_size}, "
                f"tree={self.tree}, norm={self.norm():.3e})")


# -- coarsening and approximation-class estimates -----------------------------

def coarsen(coeffs: WaveletCoeffs, tol: float) -> WaveletCoeffs:
    """Tree thresholding with discarded l2 mass at most ``tol``.

    Greedy by subtree energy; with ``tol == 0`` the result is the smallest
    tree around the nonzero entries, with all values kept.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if tol == 0.0:
        mask = kernels.tree_closure(coeffs.mask & (coeffs.values != 0.0), coeffs.J)
    else:
        mask = np.asarray(kernels.greedy_tree(coeffs.values, coeffs.J, float(tol)),
                          dtype=bool)
    return WaveletCoeffs(coeffs.J, np.where(mask, coeffs.values, 0.0), mask, True)


def greedy_tree_errors(coeffs: WaveletCoeffs) -> np.ndarray:
    """``sigma_N`` (N = 0, 1, ...) along the greedy tree sequence.

    These are upper bounds for the best ``N``-term tree approximation errors.
    """
    _, trace = kernels.greedy_tree(coeffs.values, coeffs.J, 0.0, True)
    return np.sqrt(np.maximum(np.asarray(trace), 0.0))


def anorm_tree_estimate(coeffs: WaveletCoeffs, s: float) -> float:
    """Greedy surrogate of the tree approximation-class quasi-norm.

    ``max_N (N + 1)**s sigma_N`` over the greedy tree sequence; the shift by
    one makes ``N = 0`` (the empty tree, error ``||v||``) count with weight 1,
    so a single root coefficient ``c`` gives ``|c|``.
    """
    sigma = greedy_tree_errors(coeffs)
    N = np.arange(sigma.size)
    return float(np.max((N + 1.0) ** s * sigma))


# -- Riesz constants ----------------------------------------------------------

def stiffness_scaling(J: int) -> np.ndarray:
    """Diagonal ``2**level`` per flat index (H1 rescaling of the wavelets)."""
    n = (1 << J) - 1
    d = np.empty(n)
    d[:3] = 1.0
    for lev in range(1, J - 1):
        off = kernels.level_offset(lev)
        d[off:off + level_size(lev)] = 2.0 ** lev
    return d


@lru_cache(maxsize=32)
def riesz_constants(J: int, norm: str = "H1") -> tuple[float, float]:
    """Extreme eigenvalues of the (rescaled) wavelet Gram matrix in ``S_J``.

    ``norm="L2"`` uses the mass matrix and the normalized wavelets;
    ``norm="H1"`` uses the stiffness matrix with wavelets divided by
    ``2**level``.  Returns ``(lower, upper)``.
    """
    if not MIN_LEVEL <= J <= 12:
        raise ValueError("riesz_constants supports 2 <= J <= 12")
    T = synthesis_matrix(J)
    if norm == "L2":
        G = T.T @ (gram_matrix(J) @ T)
    elif norm == "H1":
        D = 1.0 / stiffness_scaling(J)
        G = (T * D).T @ (stiffness_matrix(J) @ (T * D))
    else:
        raise ValueError("norm must be 'L2' or 'H1'")
    ev = linalg.eigvalsh((G + G.T) / 2)
    return float(ev[0]), float(ev[-1])
