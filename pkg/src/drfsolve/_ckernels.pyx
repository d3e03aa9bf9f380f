# cython: language_level=3
"""Compiled kernels: Fenwick tree with affine correction and the mixing-weight solver."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def fenwick_build(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = values.shape[0]
    cdef double[::1] v = values
    tree_arr = np.zeros(n + 1, dtype=np.float64)
    cdef double[::1] tree = tree_arr
    cdef Py_ssize_t i, j
    for i in range(1, n + 1):
        tree[i] += v[i - 1]
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]
    return tree_arr


cpdef void fenwick_add(double[::1] tree, Py_ssize_t i, double delta):
    cdef Py_ssize_t n = tree.shape[0] - 1
    cdef Py_ssize_t j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & -j


cpdef double fenwick_prefix(double[::1] tree, Py_ssize_t k):
    cdef double s = 0.0
    cdef Py_ssize_t j = k
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


cdef inline Py_ssize_t _search(double[::1] tree, double target, double a, double b) nogil:
    cdef Py_ssize_t n = tree.shape[0] - 1
    cdef Py_ssize_t pos = 0, nxt, step = 1
    cdef double acc = 0.0, cand
    if n <= 0:
        return 0
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n:
            cand = acc + tree[nxt]
            if a * cand + b * nxt <= target:
                pos = nxt
                acc = cand
        step //= 2
    if pos < n:
        return pos
    return n - 1


cpdef Py_ssize_t fenwick_search(double[::1] tree, double target, double a, double b):
    return _search(tree, target, a, b)


cpdef void fenwick_search_many(double[::1] tree, double[::1] targets, double a, double b,
                               cnp.int64_t[::1] out):
    cdef Py_ssize_t k
    for k in range(targets.shape[0]):
        out[k] = _search(tree, targets[k], a, b)


cdef inline double _gprime(double alpha, double k, double s1, double s2, double n,
                           double rho, double delta) nogil:
    cdef double q = (1.0 - alpha) * (1.0 - alpha)
    cdef double n2 = n * n
    cdef double omd2 = (1.0 - delta) * (1.0 - delta)
    return (0.5 * s2 - s1 / n + (q - omd2) * k / (2.0 * n2 * q)
            + (n * omd2 - 2.0 * rho) / (2.0 * n2 * q))


cdef inline double _clamp(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def alpha_star(Py_ssize_t n_int, double rho, double delta, double beta, double gamma,
               double p_old, double w, double tol_g, double eps_alpha):
    cdef double n = <double>n_int
    cdef double n2 = n * n
    cdef double floor = delta / n
    cdef double s1m = beta - p_old
    cdef double s2m = gamma - p_old * p_old
    cdef double s1 = s1m + w
    cdef double s2 = s2m + w * w
    cdef double a_full = 0.5 * s2 - s1 / n + 1.0 / (2.0 * n)
    cdef double a_minus = 0.5 * s2m - s1m / n + (n - 1.0) / (2.0 * n2)
    cdef double b_minus = rho / n2 - (1.0 - delta) * (1.0 - delta) / (2.0 * n2)
    cdef double abar, lo = 0.0, hi = 1.0, mid, g
    cdef long it = 0
    if w >= floor:
        if a_full * n2 <= rho or a_full <= 0.0:
            return 0.0, 0
        return _clamp(1.0 - sqrt(rho / a_full) / n, 0.0, 1.0), 0
    abar = (floor - w) / (1.0 / n - w)
    while True:
        if lo > abar:
            if a_full * n2 <= rho or a_full <= 0.0:
                return 0.0, it
            return _clamp(1.0 - sqrt(rho / a_full) / n, lo, hi), it
        if hi < abar:
            if a_minus <= b_minus or a_minus <= 0.0:
                return 0.0, it
            return _clamp(1.0 - sqrt((b_minus if b_minus > 0.0 else 0.0) / a_minus), lo, hi), it
        mid = 0.5 * (lo + hi)
        it += 1
        if mid >= abar:
            g = _gprime(mid, n, s1, s2, n, rho, delta)
        else:
            g = _gprime(mid, n - 1.0, s1m, s2m, n, rho, delta)
        if fabs(g) <= tol_g or hi - lo <= eps_alpha:
            return mid, it
        if g > 0.0:
            lo = mid
        else:
            hi = mid
