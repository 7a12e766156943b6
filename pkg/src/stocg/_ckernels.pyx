# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef double FRAC_EPS = 1e-12


def subset_values_facility(R):
    cdef const double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef Py_ssize_t N = r.shape[0], n = r.shape[1]
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n
    out_arr = np.zeros(size)
    vals_arr = np.zeros(size)
    cdef double[::1] out = out_arr
    cdef double[::1] vals = vals_arr
    cdef Py_ssize_t u, i, m, lo
    cdef double ri, v
    for u in range(N):
        vals[0] = 0.0
        for i in range(n):
            lo = (<Py_ssize_t>1) << i
            ri = r[u, i]
            for m in range(lo):
                v = vals[m]
                vals[lo + m] = v if v >= ri else ri
        for m in range(size):
            out[m] += vals[m]
    for m in range(size):
        out[m] /= N
    return out_arr


def subset_values_concave(R):
    cdef const double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef Py_ssize_t N = r.shape[0], n = r.shape[1]
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n
    out_arr = np.zeros(size)
    sums_arr = np.zeros(size)
    cdef double[::1] out = out_arr
    cdef double[::1] sums = sums_arr
    cdef Py_ssize_t u, i, m, lo
    cdef double ri
    for u in range(N):
        sums[0] = 0.0
        for i in range(n):
            lo = (<Py_ssize_t>1) << i
            ri = r[u, i]
            for m in range(lo):
                sums[lo + m] = sums[m] + ri
        for m in range(size):
            out[m] += sqrt(sums[m])
    for m in range(size):
        out[m] /= N
    return out_arr


def facility_marginals(R, users, S):
    cdef const double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef const long long[::1] us = np.ascontiguousarray(users, dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] s = np.ascontiguousarray(np.asarray(S, dtype=bool).view(np.uint8))
    cdef Py_ssize_t b = us.shape[0], n = r.shape[1]
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i, argtop
    cdef long long u
    cdef double top, second, v, without, with_
    for k in range(b):
        u = us[k]
        top = 0.0
        second = 0.0
        argtop = -1
        for i in range(n):
            if s[k, i]:
                v = r[u, i]
                if argtop < 0 or v > top:
                    if argtop >= 0:
                        second = top
                    top = v if v > 0.0 else 0.0
                    argtop = i
                elif v > second:
                    second = v
        for i in range(n):
            if s[k, i] and i == argtop:
                without = second
            else:
                without = top
            v = r[u, i]
            with_ = v if v > without else without
            out[i] += with_ - without
    for i in range(n):
        out[i] /= b
    return out_arr


def concave_marginals(R, users, S):
    cdef const double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef const long long[::1] us = np.ascontiguousarray(users, dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] s = np.ascontiguousarray(np.asarray(S, dtype=bool).view(np.uint8))
    cdef Py_ssize_t b = us.shape[0], n = r.shape[1]
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    cdef long long u
    cdef double total, without
    for k in range(b):
        u = us[k]
        total = 0.0
        for i in range(n):
            if s[k, i]:
                total = total + r[u, i]
        for i in range(n):
            if s[k, i]:
                without = total - r[u, i]
            else:
                without = total
            if without < 0.0:
                without = 0.0
            out[i] += sqrt(without + r[u, i]) - sqrt(without)
    for i in range(n):
        out[i] /= b
    return out_arr


cdef inline bint _is_frac(double v) nogil:
    return FRAC_EPS < v < 1.0 - FRAC_EPS


cdef inline double _snap(double v) nogil:
    if v <= FRAC_EPS:
        return 0.0
    if v >= 1.0 - FRAC_EPS:
        return 1.0
    return v


def pipage_batch(x, uniforms):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], trials = uv.shape[0]
    out_arr = np.zeros((trials, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    y_arr = np.empty(n)
    cdef double[::1] y = y_arr
    cdef Py_ssize_t r, j, i, m, cur, used
    cdef double yi, yj, up, down
    for r in range(trials):
        for m in range(n):
            y[m] = _snap(xv[m])
        used = 0
        cur = -1
        for j in range(n):
            if not _is_frac(y[j]):
                continue
            if cur < 0:
                cur = j
                continue
            i = cur
            yi = y[i]
            yj = y[j]
            up = 1.0 - yi if 1.0 - yi < yj else yj
            down = yi if yi < 1.0 - yj else 1.0 - yj
            if uv[r, used] * (up + down) < down:
                if 1.0 - yi <= yj:
                    y[i] = 1.0
                    y[j] = yj - (1.0 - yi)
                else:
                    y[i] = yi + yj
                    y[j] = 0.0
            else:
                if yi <= 1.0 - yj:
                    y[i] = 0.0
                    y[j] = yj + yi
                else:
                    y[i] = yi - (1.0 - yj)
                    y[j] = 1.0
            used += 1
            y[i] = _snap(y[i])
            y[j] = _snap(y[j])
            if _is_frac(y[i]):
                cur = i
            elif _is_frac(y[j]):
                cur = j
            else:
                cur = -1
        if cur >= 0:
            y[cur] = 1.0 if uv[r, used] < y[cur] else 0.0
        for m in range(n):
            if y[m] == 1.0:
                out[r, m] = 1
    return out_arr


def power_iteration_min(G, double tol, Py_ssize_t max_iter, v0):
    cdef const double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t i, j, it
    cdef double c = 0.0, rs, mu = 0.0, mu_prev = 0.0, nw, acc, res
    cdef bint have_prev = False
    for i in range(n):
        rs = 0.0
        for j in range(n):
            rs += fabs(g[i, j])
        if rs > c:
            c = rs
    v_arr = np.array(v0, dtype=np.float64, copy=True)
    w_arr = np.empty(n)
    cdef double[::1] v = v_arr
    cdef double[::1] w = w_arr
    nw = 0.0
    for i in range(n):
        nw += v[i] * v[i]
    nw = sqrt(nw)
    for i in range(n):
        v[i] /= nw
    for it in range(1, max_iter + 1):
        mu = 0.0
        nw = 0.0
        for i in range(n):
            acc = c * v[i]
            for j in range(n):
                acc -= g[i, j] * v[j]
            w[i] = acc
            mu += v[i] * acc
            nw += acc * acc
        nw = sqrt(nw)
        if nw == 0.0:
            return c, v_arr, it, 0.0, True
        for i in range(n):
            v[i] = w[i] / nw
        if have_prev and fabs(mu - mu_prev) <= tol * fabs(mu):
            return c - _rayleigh(g, c, v, w), v_arr, it, _residual(g, c, v, w), True
        mu_prev = mu
        have_prev = True
    _rayleigh(g, c, v, w)
    return c - mu, v_arr, max_iter, _residual(g, c, v, w), False


cdef double _rayleigh(const double[:, ::1] g, double c, double[::1] v, double[::1] w):
    cdef Py_ssize_t n = g.shape[0], i, j
    cdef double acc, mu = 0.0
    for i in range(n):
        acc = c * v[i]
        for j in range(n):
            acc -= g[i, j] * v[j]
        w[i] = acc
        mu += v[i] * acc
    return mu


cdef double _residual(const double[:, ::1] g, double c, double[::1] v, double[::1] w):
    cdef Py_ssize_t n = g.shape[0], i
    cdef double mu = _rayleigh(g, c, v, w), res = 0.0, e
    for i in range(n):
        e = w[i] - mu * v[i]
        res += e * e
    return sqrt(res)
