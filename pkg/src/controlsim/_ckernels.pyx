# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, fabs
from scipy.special import betaln

cnp.import_array()


def folded_log_lr(p, double a, double b):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double base = -betaln(a, b)
    cdef double am1 = a - 1.0, bm1 = b - 1.0, acc, x
    cdef bint use_a = a != 1.0, use_b = b != 1.0
    with nogil:
        for i in range(n):
            x = flat[i]
            acc = base
            if use_a:
                acc = acc + am1 * log(x)
            if use_b:
                acc = acc + bm1 * log1p(-x)
            out[i] = fabs(acc)
    return out.reshape(np.shape(p))


def tolerance_accumulate(dist, loss, taus):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.ascontiguousarray(dist, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] l = np.ascontiguousarray(loss, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(taus, dtype=np.float64)
    cdef Py_ssize_t i, nt = t.shape[0], n = d.shape[0], lo, hi, mid
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(nt + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sums = np.zeros(nt + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sumsq = np.zeros(nt + 1, dtype=np.float64)
    cdef double x, v
    with nogil:
        for i in range(n):
            x = d[i]
            # leftmost tau >= x; NaN compares false everywhere and lands past the end
            lo = 0
            hi = nt
            if x == x:
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if t[mid] < x:
                        lo = mid + 1
                    else:
                        hi = mid
            else:
                lo = nt
            v = l[i]
            counts[lo] += 1
            sums[lo] += v
            sumsq[lo] += v * v
    return np.cumsum(counts[:nt]), np.cumsum(sums[:nt]), np.cumsum(sumsq[:nt])
