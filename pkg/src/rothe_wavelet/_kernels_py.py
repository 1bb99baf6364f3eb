"""Pure-Python/numpy kernels (fallback for the compiled ``_kernels`` module).

Flat index layout for an ambient nodal level ``L`` (mesh ``2**-L``):
index level 0 holds the three scaling functions of mesh 1/4 at ``[0, 3)``,
index level ``l >= 1`` holds ``2**(l+1)`` wavelets at
``[2**(l+1) - 1, 2**(l+2) - 1)``.  The deepest index level is ``L - 2`` and
the total length is ``2**L - 1``.

All lifting routines take the per-level scale factors precomputed by
:mod:`rothe_wavelet.wavelets` so the kernels stay free of table logic.
"""
from __future__ import annotations

import heapq

import numpy as np


def level_offset(level: int) -> int:
    return 0 if level == 0 else (1 << (level + 1)) - 1


def _scales(scale_int, scale_bnd, level, m):
    s = np.full(m, scale_int[level])
    s[0] = s[-1] = scale_bnd[level]
    return s


def lift_forward(nodal, L, scale_int, scale_bnd, scale_hat, ub0, ub1):
    """Nodal hat coefficients on mesh ``2**-L`` -> normalized wavelet coefficients."""
    cur = np.array(nodal, dtype=float)
    out = np.empty_like(cur)
    for lev in range(L - 2, 0, -1):
        m = 1 << (lev + 1)
        ap = cur[1::2]
        d = cur[0::2].copy()
        d[1:] -= 0.5 * ap
        d[:-1] -= 0.5 * ap
        a = ap.copy()
        a[:-1] += 0.25 * d[1:-1]
        a[1:] += 0.25 * d[1:-1]
        a[0] += ub0 * d[0]
        a[1] += ub1 * d[0]
        a[-1] += ub0 * d[-1]
        a[-2] += ub1 * d[-1]
        off = level_offset(lev)
        out[off:off + m] = d * _scales(scale_int, scale_bnd, lev, m)
        cur = a
    out[0:3] = cur * scale_hat
    return out


def lift_inverse(coeffs, L, scale_int, scale_bnd, scale_hat, ub0, ub1):
    """Normalized wavelet coefficients -> nodal hat coefficients on mesh ``2**-L``."""
    coeffs = np.asarray(coeffs, dtype=float)
    cur = coeffs[0:3] / scale_hat
    for lev in range(1, L - 1):
        m = 1 << (lev + 1)
        off = level_offset(lev)
        d = coeffs[off:off + m] / _scales(scale_int, scale_bnd, lev, m)
        ap = cur.copy()
        ap[:-1] -= 0.25 * d[1:-1]
        ap[1:] -= 0.25 * d[1:-1]
        ap[0] -= ub0 * d[0]
        ap[1] -= ub1 * d[0]
        ap[-1] -= ub0 * d[-1]
        ap[-2] -= ub1 * d[-1]
        new = np.empty(2 * m - 1)
        new[1::2] = ap
        odd = d.copy()
        odd[1:] += 0.5 * ap
        odd[:-1] += 0.5 * ap
        new[0::2] = odd
        cur = new
    return cur


def lift_transpose(loads, L, scale_int, scale_bnd, scale_hat, ub0, ub1):
    """Transpose of :func:`lift_inverse`: hat loads ``(g, phi_i)`` -> ``(g, psi_lambda)``."""
    cur = np.array(loads, dtype=float)
    out = np.empty_like(cur)
    for lev in range(L - 2, 0, -1):
        m = 1 << (lev + 1)
        lo = cur[0::2]
        la = cur[1::2] + 0.5 * (lo[:-1] + lo[1:])
        ld = lo.copy()
        ld[1:-1] -= 0.25 * (la[:-1] + la[1:])
        ld[0] -= ub0 * la[0] + ub1 * la[1]
        ld[-1] -= ub0 * la[-1] + ub1 * la[-2]
        off = level_offset(lev)
        out[off:off + m] = ld / _scales(scale_int, scale_bnd, lev, m)
        cur = la
    out[0:3] = cur / scale_hat
    return out


def parent_array(L):
    n = (1 << L) - 1
    parent = np.full(n, -1, dtype=np.int64)
    for lev in range(1, L - 1):
        off = level_offset(lev)
        m = 1 << (lev + 1)
        k = np.arange(m)
        parent[off:off + m] = level_offset(lev - 1) + k // 2
    return parent


def subtree_energy(values, L):
    """Sum of squares over each index and all its descendants."""
    e = np.asarray(values, dtype=float) ** 2
    for lev in range(L - 2, 0, -1):
        off = level_offset(lev)
        m = 1 << (lev + 1)
        pairs = e[off:off + m].reshape(-1, 2).sum(axis=1)
        poff = level_offset(lev - 1)
        e[poff:poff + pairs.size] += pairs
    return e


def tree_closure(mask, L):
    out = np.array(mask, dtype=bool)
    for lev in range(L - 2, 0, -1):
        off = level_offset(lev)
        m = 1 << (lev + 1)
        hit = out[off:off + m].reshape(-1, 2).any(axis=1)
        poff = level_offset(lev - 1)
        out[poff:poff + hit.size] |= hit
    return out


def _children(i, L):
    if i < 3:
        lev, k = 0, i
    else:
        lev = (i + 1).bit_length() - 2
        k = i - level_offset(lev)
    if lev + 1 > L - 2:
        return ()
    m_child = 1 << (lev + 2)
    first = 2 * k
    if first >= m_child:
        return ()
    base = level_offset(lev + 1)
    return (base + first, base + first + 1)


def _pending_mass(energy, pending):
    # index order, so both backends round identically
    acc = 0.0
    for i in np.flatnonzero(pending):
        acc += float(energy[i])
    return acc


def greedy_tree(values, L, tol, record=False):
    """Greedy tree thresholding by subtree energy.

    Grows a tree from the roots, always adding the candidate with the largest
    subtree energy, until the discarded squared mass is at most ``tol**2``.
    With ``tol == 0`` every index with nonzero subtree energy is kept.

    Returns the boolean mask, and with ``record`` also the discarded squared
    mass after each addition (entry 0 is the total mass).
    """
    values = np.asarray(values, dtype=float)
    energy = subtree_energy(values, L)
    total = float(energy[0] + energy[1] + energy[2])
    tol2 = tol * tol
    mask = np.zeros(values.size, dtype=bool)
    pending = np.zeros(values.size, dtype=bool)
    heap = []
    for i in range(3):
        if energy[i] > 0.0:
            heap.append((-energy[i], i))
            pending[i] = True
    heapq.heapify(heap)
    rest = total            # running estimate of the discarded mass
    trace = [total] if record else None
    while heap:
        if tol > 0.0 and rest <= tol2:
            # the running estimate cancels; confirm with the exact sum
            rest = _pending_mass(energy, pending)
            if rest <= tol2:
                break
        _, i = heapq.heappop(heap)
        mask[i] = True
        pending[i] = False
        rest -= values[i] * values[i]
        if record:
            trace.append(max(rest, 0.0))
        for c in _children(i, L):
            if energy[c] > 0.0:
                heapq.heappush(heap, (-energy[c], c))
                pending[c] = True
    if record:
        return mask, np.array(trace)
    return mask
