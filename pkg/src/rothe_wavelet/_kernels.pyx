# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lifting and tree kernels (same API and results as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _offset(int level) noexcept nogil:
    return 0 if level == 0 else (<Py_ssize_t>1 << (level + 1)) - 1


def level_offset(int level):
    return _offset(level)


cdef inline double _scale(const double[::1] si, const double[::1] sb, int lev, Py_ssize_t k,
                          Py_ssize_t m) noexcept nogil:
    if k == 0 or k == m - 1:
        return sb[lev]
    return si[lev]


def lift_forward(nodal, int L, scale_int, scale_bnd, double scale_hat, double ub0, double ub1):
    cdef double[::1] cur = np.array(nodal, dtype=np.float64)
    cdef Py_ssize_t n = cur.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef const double[::1] si = np.ascontiguousarray(scale_int, dtype=np.float64)
    cdef const double[::1] sb = np.ascontiguousarray(scale_bnd, dtype=np.float64)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] a = np.empty(n)
    cdef int lev
    cdef Py_ssize_t m, i, off
    with nogil:
        for lev in range(L - 2, 0, -1):
            m = <Py_ssize_t>1 << (lev + 1)
            # cur has 2m - 1 entries: even positions are details, odd are coarse
            for i in range(m):
                d[i] = cur[2 * i]
            for i in range(1, m):
                d[i] -= 0.5 * cur[2 * i - 1]
            for i in range(m - 1):
                d[i] -= 0.5 * cur[2 * i + 1]
            for i in range(m - 1):
                a[i] = cur[2 * i + 1]
            for i in range(m - 2):
                a[i] += 0.25 * d[i + 1]
            for i in range(1, m - 1):
                a[i] += 0.25 * d[i]
            a[0] += ub0 * d[0]
            a[1] += ub1 * d[0]
            a[m - 2] += ub0 * d[m - 1]
            a[m - 3] += ub1 * d[m - 1]
            off = _offset(lev)
            for i in range(m):
                out[off + i] = d[i] * _scale(si, sb, lev, i, m)
            for i in range(m - 1):
                cur[i] = a[i]
        for i in range(3):
            out[i] = cur[i] * scale_hat
    return out_arr


def lift_inverse(coeffs, int L, scale_int, scale_bnd, double scale_hat, double ub0, double ub1):
    cdef const double[::1] c = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cur_arr = np.empty(n)
    cdef double[::1] cur = cur_arr
    cdef const double[::1] si = np.ascontiguousarray(scale_int, dtype=np.float64)
    cdef const double[::1] sb = np.ascontiguousarray(scale_bnd, dtype=np.float64)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] ap = np.empty(n)
    cdef int lev
    cdef Py_ssize_t m, i, off
    with nogil:
        for i in range(3):
            cur[i] = c[i] / scale_hat
        for lev in range(1, L - 1):
            m = <Py_ssize_t>1 << (lev + 1)
            off = _offset(lev)
            for i in range(m):
                d[i] = c[off + i] / _scale(si, sb, lev, i, m)
            for i in range(m - 1):
                ap[i] = cur[i]
            for i in range(m - 2):
                ap[i] -= 0.25 * d[i + 1]
            for i in range(1, m - 1):
                ap[i] -= 0.25 * d[i]
            ap[0] -= ub0 * d[0]
            ap[1] -= ub1 * d[0]
            ap[m - 2] -= ub0 * d[m - 1]
            ap[m - 3] -= ub1 * d[m - 1]
            for i in range(m - 1):
                cur[2 * i + 1] = ap[i]
            for i in range(m):
                cur[2 * i] = d[i]
            for i in range(1, m):
                cur[2 * i] += 0.5 * ap[i - 1]
            for i in range(m - 1):
                cur[2 * i] += 0.5 * ap[i]
    return cur_arr


def lift_transpose(loads, int L, scale_int, scale_bnd, double scale_hat, double ub0, double ub1):
    cdef double[::1] cur = np.array(loads, dtype=np.float64)
    cdef Py_ssize_t n = cur.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef const double[::1] si = np.ascontiguousarray(scale_int, dtype=np.float64)
    cdef const double[::1] sb = np.ascontiguousarray(scale_bnd, dtype=np.float64)
    cdef double[::1] lo = np.empty(n)
    cdef double[::1] la = np.empty(n)
    cdef int lev
    cdef Py_ssize_t m, i, off
    with nogil:
        for lev in range(L - 2, 0, -1):
            m = <Py_ssize_t>1 << (lev + 1)
            for i in range(m):
                lo[i] = cur[2 * i]
            for i in range(m - 1):
                la[i] = cur[2 * i + 1] + 0.5 * (lo[i] + lo[i + 1])
            for i in range(1, m - 1):
                lo[i] -= 0.25 * (la[i - 1] + la[i])
            lo[0] -= ub0 * la[0] + ub1 * la[1]
            lo[m - 1] -= ub0 * la[m - 2] + ub1 * la[m - 3]
            off = _offset(lev)
            for i in range(m):
                out[off + i] = lo[i] / _scale(si, sb, lev, i, m)
            for i in range(m - 1):
                cur[i] = la[i]
        for i in range(3):
            out[i] = cur[i] / scale_hat
    return out_arr


def subtree_energy(values, int L):
    e_arr = np.asarray(values, dtype=np.float64) ** 2
    cdef double[::1] e = e_arr
    cdef int lev
    cdef Py_ssize_t m, i, off, poff
    with nogil:
        for lev in range(L - 2, 0, -1):
            off = _offset(lev)
            poff = _offset(lev - 1)
            m = <Py_ssize_t>1 << (lev + 1)
            for i in range(m // 2):
                e[poff + i] += e[off + 2 * i] + e[off + 2 * i + 1]
    return e_arr


def tree_closure(mask, int L):
    out_arr = np.array(mask, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef int lev
    cdef Py_ssize_t m, i, off, poff
    with nogil:
        for lev in range(L - 2, 0, -1):
            off = _offset(lev)
            poff = _offset(lev - 1)
            m = <Py_ssize_t>1 << (lev + 1)
            for i in range(m // 2):
                if out[off + 2 * i] or out[off + 2 * i + 1]:
                    out[poff + i] = 1
    return out_arr.astype(bool)


# binary max-heap on (energy, -index): larger energy first, then smaller index

cdef inline bint _before(double ea, Py_ssize_t ia, double eb, Py_ssize_t ib) noexcept nogil:
    return ea > eb or (ea == eb and ia < ib)


cdef void _push(double[::1] he, Py_ssize_t[::1] hi, Py_ssize_t* size,
                double e, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t pos = size[0]
    cdef Py_ssize_t par
    size[0] += 1
    while pos > 0:
        par = (pos - 1) // 2
        if _before(e, idx, he[par], hi[par]):
            he[pos] = he[par]
            hi[pos] = hi[par]
            pos = par
        else:
            break
    he[pos] = e
    hi[pos] = idx


cdef Py_ssize_t _pop(double[::1] he, Py_ssize_t[::1] hi, Py_ssize_t* size) noexcept nogil:
    cdef Py_ssize_t top = hi[0]
    cdef Py_ssize_t n, pos, child
    cdef double e
    cdef Py_ssize_t idx
    size[0] -= 1
    n = size[0]
    if n == 0:
        return top
    e = he[n]
    idx = hi[n]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and _before(he[child + 1], hi[child + 1], he[child], hi[child]):
            child += 1
        if _before(he[child], hi[child], e, idx):
            he[pos] = he[child]
            hi[pos] = hi[child]
            pos = child
        else:
            break
    he[pos] = e
    hi[pos] = idx
    return top


def greedy_tree(values, int L, double tol, record=False):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] energy = subtree_energy(values, L)
    cdef Py_ssize_t n = v.shape[0]
    mask_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] mask = mask_arr
    pending_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] pending = pending_arr
    cdef double[::1] he = np.empty(n + 1)
    cdef Py_ssize_t[::1] hi = np.empty(n + 1, dtype=np.intp)
    trace_arr = np.empty(n + 1)
    cdef double[::1] trace = trace_arr
    cdef bint rec = bool(record)
    cdef Py_ssize_t size = 0, count = 0, i, j, lev, k, first, base, c
    cdef double total = energy[0] + energy[1] + energy[2]
    cdef double tol2 = tol * tol
    cdef double rest = total
    with nogil:
        for i in range(3):
            if energy[i] > 0.0:
                _push(he, hi, &size, energy[i], i)
                pending[i] = 1
        if rec:
            trace[0] = total
        while size > 0:
            if tol > 0.0 and rest <= tol2:
                rest = 0.0
                for j in range(n):
                    if pending[j]:
                        rest = rest + energy[j]
                if rest <= tol2:
                    break
            i = _pop(he, hi, &size)
            mask[i] = 1
            pending[i] = 0
            rest = rest - v[i] * v[i]
            count += 1
            if rec:
                trace[count] = rest if rest > 0.0 else 0.0
            if i < 3:
                lev = 0
                k = i
            else:
                lev = 0
                c = i + 1
                while c > 1:
                    c >>= 1
                    lev += 1
                lev -= 1
                k = i - _offset(lev)
            if lev + 1 > L - 2:
                continue
            first = 2 * k
            if first >= (<Py_ssize_t>1 << (lev + 2)):
                continue
            base = _offset(lev + 1)
            for c in range(base + first, base + first + 2):
                if energy[c] > 0.0:
                    _push(he, hi, &size, energy[c], c)
                    pending[c] = 1
    if rec:
        return mask_arr.astype(bool), trace_arr[:count + 1].copy()
    return mask_arr.astype(bool)
