"""Adaptive wavelet solver for the nonlinear elliptic problem of one time step.

Each step solves, for ``v`` in ``S_J``,

    (v, psi) + tau a(v, psi) - tau (f(v + w), psi) = (v_prev, psi)   for all psi,

where ``w`` is the (given) linear part at the same time node.  In normalized
wavelet coordinates ``x`` and with the diagonal scaling
``d_lambda = sqrt(1 + tau c_A 4**level)`` the unknown is ``y = D x`` and the
residual is

    R(y) = D^-1 (B x - tau F(x) - g),     B = T^T (M + tau S) T,

with ``F`` the wavelet loads of ``f(u + w)``.  Loads of the nonlinearity use
two-point Gauss quadrature per cell.  This keeps ``F`` monotone up to
``L_f`` in L2, which gives the certificate

    ||v - v*||_B <= ||R(y)|| / ((1 - tau L_f) sqrt(gamma_min)),

``gamma_min`` being the smallest eigenvalue of ``D^-1 B D^-1``.  The B-norm
dominates the L2 norm, so the bound also certifies the L2 error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import linalg

from . import kernels
from .errors import AssumptionViolation, NonconvergenceError, RefinementExhausted
from .linear import linear_system
from .spectral import ModelParams
from .wavelets import (WaveletCoeffs, coarsen, fwt_array, ifwt_array, level_size,
                       solve_mass, synthesis_matrix, transpose_array)

C_A = 88.0                  # ||psi'||^2 / ||psi||^2 = C_A 4**level for interior wavelets
GAMMA_LEVEL = 10            # densest level used for the eigenvalue calibration
GAMMA_SAFETY = 0.1
MAX_LEVEL = 16

_GAUSS_T = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


# -- tolerance bookkeeping ----------------------------------------------------

@dataclass(frozen=True)
class ToleranceSchedule:
    """Per-step tolerances ``eps_n`` and the geometric decay of inner tolerances."""

    eps: tuple
    eta_rule: float = 0.5

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if not eps or min(eps) <= 0:
            raise ValueError("all eps_n must be positive")
        if not 0 < self.eta_rule < 1:
            raise ValueError("eta_rule must lie in (0, 1)")
        object.__setattr__(self, "eps", eps)

    @classmethod
    def uniform(cls, total: float, N: int, eta_rule: float = 0.5) -> "ToleranceSchedule":
        return cls((total / N,) * N, eta_rule)

    @property
    def N(self) -> int:
        return len(self.eps)

    @property
    def total(self) -> float:
        return float(sum(self.eps))


@dataclass
class StepStats:
    support_size: int = 0
    iterations: int = 0
    op_count: int = 0
    achieved_residual: float = 0.0
    eps: float = 0.0


# -- index geometry -----------------------------------------------------------

def _level_geometry(level: int, J: int):
    """Support endpoints and kink spacing (integer units of ``2**-J``)."""
    if level == 0:
        u = 1 << (J - 2)
        k = np.arange(3)
        return k * u, (k + 2) * u, u
    u = 1 << (J - level - 2)
    m = level_size(level)
    node = 2 * np.arange(m) + 1
    a = (node - 3) * u
    b = (node + 3) * u
    a[0], b[0] = 0, 6 * u
    a[-1], b[-1] = (2 * m - 6) * u, 2 * m * u
    return a, b, u


def expansion_mask(mask: np.ndarray, J: int) -> np.ndarray:
    """Indices that can couple with ``mask`` through ``M`` or ``S``.

    A finer (or equal-level) function interacts with a coarser one only if a
    kink of the coarser function lies inside its support, since on linear
    pieces the two vanishing moments annihilate both bilinear forms.  Coarser
    functions are kept whenever their support overlaps a selected one.  The
    result is closed under parents.
    """
    mask = np.asarray(mask, dtype=bool)
    n_pos = (1 << J) + 1
    out = mask.copy()
    geo = [_level_geometry(lev, J) for lev in range(J - 1)]

    def sel(lev):
        off = kernels.level_offset(lev)
        return mask[off:off + level_size(lev)]

    # finer-or-equal partners: kinks of selected functions at levels <= lev
    marks = np.zeros(n_pos, dtype=np.int64)
    for lev in range(J - 1):
        a, b, u = geo[lev]
        s = sel(lev)
        if s.any():
            coarse = np.zeros(((n_pos - 1) // u) + 2, dtype=np.int64)
            np.add.at(coarse, a[s] // u, 1)
            np.add.at(coarse, b[s] // u + 1, -1)
            marks[::u] += np.cumsum(coarse)[:(n_pos - 1) // u + 1] > 0
        prefix = np.concatenate(([0], np.cumsum(marks > 0)))
        hits = prefix[b] - prefix[a + 1] > 0          # marks strictly inside (a, b)
        off = kernels.level_offset(lev)
        out[off:off + level_size(lev)] |= hits
    # coarser partners: overlap with supports of selected functions at finer levels
    cover = np.zeros(n_pos, dtype=np.int64)            # per cell coverage (n_pos-1 cells)
    for lev in range(J - 2, -1, -1):
        a, b, _ = geo[lev]
        prefix = np.concatenate(([0], np.cumsum(cover[:-1] > 0)))
        hits = prefix[b] - prefix[a] > 0
        off = kernels.level_offset(lev)
        out[off:off + level_size(lev)] |= hits
        s = sel(lev)
        if s.any():
            diff = np.zeros(n_pos + 1, dtype=np.int64)
            np.add.at(diff, a[s], 1)
            np.add.at(diff, b[s], -1)
            cover[:-1] += np.cumsum(diff)[:n_pos - 1]
    return np.asarray(kernels.tree_closure(out, J), dtype=bool)


# -- operator -----------------------------------------------------------------

def level_array(J: int) -> np.ndarray:
    n = (1 << J) - 1
    lev = np.zeros(n)
    for ell in range(1, J - 1):
        off = kernels.level_offset(ell)
        lev[off:off + level_size(ell)] = ell
    return lev


class PreconditionedOperator:
    """``D^-1 B D^-1`` for ``B = I + tau A`` in wavelet coordinates of ``S_J``."""

    def __init__(self, J: int, tau: float, c_A: float = C_A):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.J = J
        self.tau = tau
        self.c_A = c_A
        self.d = np.sqrt(1.0 + tau * c_A * 4.0 ** level_array(J))
        self.system = linear_system(J, tau)

    @property
    def dim(self) -> int:
        return (1 << self.J) - 1

    def apply_B(self, x: np.ndarray) -> np.ndarray:
        """Unpreconditioned ``B x`` on the full index set (linear cost)."""
        nodal = ifwt_array(x, self.J)
        h, tau = self.system.h, self.tau
        loads = (2 * h / 3 + 2 * tau / h) * nodal
        off = h / 6 - tau / h
        loads[1:] += off * nodal[:-1]
        loads[:-1] += off * nodal[1:]
        return transpose_array(loads, self.J)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.apply_B(y / self.d) / self.d

    def dense(self) -> np.ndarray:
        if self.J > 12:
            raise ValueError("dense operator only for J <= 12")
        T = synthesis_matrix(self.J)
        B = T.T @ (self.system.matrix() @ T)
        return B / np.outer(self.d, self.d)

    def gamma(self) -> tuple[float, float]:
        """Extreme eigenvalues of the preconditioned operator.

        Computed densely at ``min(J, GAMMA_LEVEL)``; beyond that level the
        measured values are widened by ``GAMMA_SAFETY``.
        """
        return _gamma(min(self.J, GAMMA_LEVEL), self.tau, self.c_A, self.J > GAMMA_LEVEL)


@lru_cache(maxsize=64)
def _gamma(J: int, tau: float, c_A: float, widen: bool):
    op = PreconditionedOperator(J, tau, c_A)
    ev = linalg.eigvalsh(op.dense())
    lo, hi = float(ev[0]), float(ev[-1])
    if widen:
        lo, hi = lo * (1 - GAMMA_SAFETY), hi * (1 + GAMMA_SAFETY)
    return lo, hi


def apply_operator(op: PreconditionedOperator, v: WaveletCoeffs,
                   require_tree: bool = True) -> WaveletCoeffs:
    """Preconditioned ``I + tau A`` applied to ``v`` (preconditioned coordinates).

    The product is exact on the expansion of ``supp v`` (see
    :func:`expansion_mask`); outside it all entries vanish.
    """
    if require_tree and not v.is_tree():
        raise ValueError("apply_operator expects a tree-structured input")
    if v.J != op.J:
        v = v.embed(op.J)
    full = op.apply(v.values)
    mask = expansion_mask(v.mask, op.J)
    return WaveletCoeffs(op.J, np.where(mask, full, 0.0), mask, True)


# -- nonlinearity -------------------------------------------------------------

def _gauss_values(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of the hat expansion ``u`` at the two Gauss points of every cell."""
    pad = np.concatenate((np.zeros(u.shape[:-1] + (1,)), u, np.zeros(u.shape[:-1] + (1,))),
                         axis=-1)
    left, right = pad[..., :-1], pad[..., 1:]
    g0 = left * (1 - _GAUSS_T[0]) + right * _GAUSS_T[0]
    g1 = left * (1 - _GAUSS_T[1]) + right * _GAUSS_T[1]
    return g0, g1


def nonlinear_hat_loads(params: ModelParams, u: np.ndarray, J: int) -> np.ndarray:
    """``(f(u), phi_{J,j})`` by two-point Gauss quadrature; batch axes allowed."""
    h = 2.0 ** -J
    g0, g1 = _gauss_values(u)
    f0, f1 = params.f(g0) * (h / 2), params.f(g1) * (h / 2)
    t0, t1 = _GAUSS_T
    # cell c carries hats c (left, weight 1-t) and c+1 (right, weight t)
    left = f0 * (1 - t0) + f1 * (1 - t1)
    right = f0 * t0 + f1 * t1
    return left[..., 1:] + right[..., :-1]


def prolong_nodal(c: np.ndarray, J_from: int, J_to: int) -> np.ndarray:
    """Exact embedding of a hat expansion into a finer mesh."""
    for _ in range(J_to - J_from):
        pad = np.concatenate((np.zeros(c.shape[:-1] + (1,)), c,
                              np.zeros(c.shape[:-1] + (1,))), axis=-1)
        fine = np.empty(c.shape[:-1] + (2 * c.shape[-1] + 1,))
        fine[..., 1::2] = c
        fine[..., 0::2] = 0.5 * (pad[..., :-1] + pad[..., 1:])
        c = fine
    return c


def _level_of(n: int) -> int:
    return (n + 1).bit_length() - 1


def eval_nonlinear(v: WaveletCoeffs, w_nodal: np.ndarray, tau: float, tol: float,
                   params: ModelParams, max_level: int = MAX_LEVEL) -> WaveletCoeffs:
    """Wavelet coefficients of the L2 projection of ``tau f(v + w)``, coarsened to ``tol``.

    ``w_nodal`` holds hat coefficients of ``w`` at its own level; the
    evaluation level is the finer of ``w``'s level and the ambient level of
    ``v``.  With ``f(u) = u`` the result is ``tau (v + w)`` up to ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    Jw = _level_of(np.asarray(w_nodal).shape[-1])
    Jq = max(Jw, v.J)
    if Jq > max_level:
        raise RefinementExhausted(
            f"evaluation needs level {Jq} > max_level {max_level}")
    if params.is_zero:
        return WaveletCoeffs.zeros(Jq)
    u = prolong_nodal(ifwt_array(v.embed(v.J).values, v.J), v.J, Jq) \
        + prolong_nodal(np.asarray(w_nodal, dtype=float), Jw, Jq)
    coeffs = tau * fwt_array(solve_mass(Jq, nonlinear_hat_loads(params, u, Jq)), Jq)
    return coarsen(WaveletCoeffs.from_dense(coeffs, tree=True), tol)


# -- residual and solver ------------------------------------------------------

@dataclass
class StepProblem:
    """Data of one implicit step in preconditioned wavelet coordinates."""

    op: PreconditionedOperator
    params: ModelParams
    w_nodal: np.ndarray                   # hat coefficients at level op.J
    g: np.ndarray                         # wavelet loads of v_prev
    ops: int = field(default=0)

    @classmethod
    def build(cls, op, params, v_prev_nodal, w_nodal):
        v_prev_nodal = np.asarray(v_prev_nodal, dtype=float)
        w_nodal = np.asarray(w_nodal, dtype=float)
        if v_prev_nodal.shape != (op.dim,) or w_nodal.shape != (op.dim,):
            raise ValueError("v_prev and w must be hat coefficients at the operator level")
        g = transpose_array(op.system.apply_mass(v_prev_nodal), op.J)
        return cls(op, params, w_nodal, g)

    def loads_F(self, x: np.ndarray) -> np.ndarray:
        u = ifwt_array(x, self.op.J) + self.w_nodal
        return transpose_array(nonlinear_hat_loads(self.params, u, self.op.J), self.op.J)

    def exact_residual(self, y: np.ndarray) -> np.ndarray:
        d = self.op.d
        x = y / d
        self.ops += 6 * self.op.dim
        rhs = self.g if self.params.is_zero else self.g + self.op.tau * self.loads_F(x)
        return (self.op.apply_B(x) - rhs) / d


def residual_RES(eta: float, problem: StepProblem, y: WaveletCoeffs) -> WaveletCoeffs:
    """Tree-supported residual with l2 error at most ``eta``.

    The nonlinear term (with the fixed load ``g``) is coarsened to ``eta/2``
    and the assembled residual once more to ``eta/2``; operator application
    is exact on the expanded tree.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    op = problem.op
    d = op.d
    x = y.values / d
    rhs = problem.g if problem.params.is_zero else problem.g + op.tau * problem.loads_F(x)
    rhs_c = coarsen(WaveletCoeffs.from_dense(rhs / d, tree=True), eta / 2)
    Bx = apply_operator(op, y, require_tree=False)
    problem.ops += 6 * op.dim + int(Bx.support_size)
    res = WaveletCoeffs(op.J, Bx.values - rhs_c.values, Bx.mask | rhs_c.mask, True)
    return coarsen(res, eta / 2)


def certify(res_norm: float, eta: float, tau: float, params: ModelParams,
            gamma_min: float) -> float:
    """Upper bound of the B-norm (hence L2) error from an ``eta``-accurate residual."""
    return (res_norm + eta) / ((1.0 - tau * params.lipschitz_L) * math.sqrt(gamma_min))


def solve_step(problem: StepProblem, init: WaveletCoeffs, eps: float,
               schedule: ToleranceSchedule | None = None, *, max_iter: int = 20000,
               coarsen_every: int = 25,
               reserve: float = 0.5) -> tuple[WaveletCoeffs, StepStats]:
    """Damped Richardson iteration to a certified L2 error ``eps``.

    Iterates until the bound drops below ``reserve * eps``; the remaining
    budget is spent on compressing the iterate, which is then re-certified.
    ``init`` and the returned vector are in unscaled wavelet coordinates.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    op, params = problem.op, problem.params
    tau, Lf = op.tau, params.lipschitz_L
    if tau * Lf >= 0.5:
        raise AssumptionViolation(f"tau*L_f = {tau * Lf:g} violates tau*L_f < 1/2")
    rule = schedule.eta_rule if schedule is not None else 0.5
    gmin, gmax = op.gamma()
    omega = 2.0 / (gmin * (1 - tau * Lf) + gmax * (1 + tau * Lf))
    target = eps * (1 - tau * Lf) * math.sqrt(gmin)     # allowed ||R|| + eta
    floor = reserve * target / 4
    stats = StepStats(eps=eps)
    start_ops = problem.ops

    init = init.embed(op.J)
    y = WaveletCoeffs(op.J, init.values * op.d, init.mask, True).with_tree()
    eta = floor
    res = residual_RES(eta, problem, y)
    eta0 = max(res.norm(), floor)
    bound = certify(res.norm(), floor, tau, params, gmin)
    it = 0
    finalized = False
    while True:
        if bound <= reserve * eps:
            # compress as far as a fresh residual still certifies eps
            slack = target - (res.norm() + eta)
            for frac in (1.0, 0.5, 0.25, 0.125):
                cand = coarsen(y, frac * slack / gmax)
                if cand.support_size == y.support_size:
                    break
                cres = residual_RES(floor, problem, cand)
                cbound = certify(cres.norm(), floor, tau, params, gmin)
                if cbound <= eps:
                    y, bound = cand, cbound
                    break
            finalized = True
            break
        if it >= max_iter:
            finalized = bound <= eps
            break
        it += 1
        eta = max(eta0 * rule ** it, floor)
        values = y.values - omega * res.values
        mask = y.mask | res.mask
        y = WaveletCoeffs(op.J, values, mask, True)
        if it % coarsen_every == 0:
            y = coarsen(y, 0.1 * target / math.sqrt(gmax))
        res = residual_RES(eta, problem, y)
        bound = certify(res.norm(), eta, tau, params, gmin)
    stats.iterations = it
    stats.achieved_residual = bound
    stats.op_count = problem.ops - start_ops
    x = WaveletCoeffs(op.J, y.values / op.d, y.mask, True)
    stats.support_size = x.support_size
    if not finalized:
        raise NonconvergenceError(
            f"no certified eps={eps:g} within {max_iter} iterations", bound)
    return x, stats


def step_vbar(v_prev: WaveletCoeffs, w_nodal: np.ndarray, eps: float, tau: float,
              params: ModelParams, schedule: ToleranceSchedule | None = None,
              **kwargs) -> tuple[WaveletCoeffs, StepStats]:
    """One step of the perturbed nonlinear scheme, warm-started at ``v_prev``."""
    w_nodal = np.asarray(w_nodal, dtype=float)
    J = _level_of(w_nodal.size)
    op = PreconditionedOperator(J, tau)
    v_prev = v_prev.embed(J)
    problem = StepProblem.build(op, params, ifwt_array(v_prev.values, J), w_nodal)
    return solve_step(problem, v_prev, eps, schedule, **kwargs)


@dataclass
class NonlinearRun:
    v: list                 # WaveletCoeffs per node
    u_nodal: np.ndarray     # hat coefficients of u = v + w_J, shape (N+1, dim)
    stats: list             # StepStats per step


def run_nonlinear(u0_nodal: np.ndarray, w_traj: np.ndarray, tau: float,
                  schedule: ToleranceSchedule, params: ModelParams,
                  **kwargs) -> NonlinearRun:
    """Iterate :func:`step_vbar`; ``w_traj`` holds hat coefficients ``(N+1, dim)``."""
    w_traj = np.asarray(w_traj, dtype=float)
    N = w_traj.shape[0] - 1
    if schedule.N != N:
        raise ValueError(f"schedule has {schedule.N} steps, trajectory {N}")
    J = _level_of(w_traj.shape[1])
    v = WaveletCoeffs.from_dense(fwt_array(np.asarray(u0_nodal, dtype=float), J), tree=True)
    vs, stats = [v], []
    for n in range(1, N + 1):
        try:
            v, st = step_vbar(v, w_traj[n], schedule.eps[n - 1], tau, params,
                              schedule, **kwargs)
        except NonconvergenceError as exc:
            raise NonconvergenceError(f"step {n}: {exc}", exc.residual) from exc
        vs.append(v)
        stats.append(st)
    v_nodal = np.stack([ifwt_array(vi.values, J) for vi in vs])
    return NonlinearRun(vs, v_nodal + w_traj, stats)


# -- dense oracle -------------------------------------------------------------

def dense_step(v_prev_nodal: np.ndarray, w_nodal: np.ndarray, tau: float,
               params: ModelParams, tol: float = 1e-14, max_iter: int = 1000) -> np.ndarray:
    """Direct nodal solve of ``(M + tau S) c = M c_prev + tau N(c + w)`` (Picard).

    Batch axes are allowed.  Contraction in the ``M + tau S`` norm holds with
    factor ``tau L_f / (1 + tau lambda_min)`` since the quadrature loads are
    ``L_f``-Lipschitz in L2.
    """
    v_prev_nodal = np.asarray(v_prev_nodal, dtype=float)
    w_nodal = np.asarray(w_nodal, dtype=float)
    J = _level_of(v_prev_nodal.shape[-1])
    system = linear_system(J, tau)
    base = system.apply_mass(v_prev_nodal)
    c = system.solve(base)
    if params.is_zero:
        return c
    scale = max(float(np.max(np.abs(c))), 1e-300)
    for _ in range(max_iter):
        new = system.solve(base + tau * nonlinear_hat_loads(params, c + w_nodal, J))
        delta = float(np.max(np.abs(new - c)))
        c = new
        if delta <= tol * scale:
            return c
    raise NonconvergenceError("dense Picard iteration did not converge")


def dense_trajectory(u0_nodal: np.ndarray, w_traj: np.ndarray, tau: float,
                     params: ModelParams) -> np.ndarray:
    """``v_bar`` (dense-solve) trajectory plus ``w``: hat coefficients of ``u``."""
    w_traj = np.asarray(w_traj, dtype=float)
    N = w_traj.shape[-2] - 1
    v = np.broadcast_to(np.asarray(u0_nodal, dtype=float), w_traj[..., 0, :].shape).copy()
    out = [v]
    for n in range(1, N + 1):
        v = dense_step(v, w_traj[..., n, :], tau, params)
        out.append(v)
    return np.stack(out, axis=-2) + w_traj
