# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_fallback`` with the same
signature and summation order. The two are interchangeable; ``_backend``
picks one at import time.
"""

import numpy as np

from libc.math cimport fabs, isfinite, log, tanh, INFINITY, NAN


def power_iterate(const double[:, ::1] b, double tol, long max_iter, long shift_after):
    """Collatz-Wielandt bracketed power iteration on an irreducible block.

    Returns ``(estimate, lower, upper, iterations, converged)``.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double lo = 0.0, hi = 0.0, r, acc, top, shift
    cdef bint converged = False, underflow = False
    cdef double[::1] x = np.ones(n)
    cdef double[::1] y = np.empty(n)

    with nogil:
        while it < max_iter:
            it += 1
            lo = INFINITY
            hi = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc = acc + b[i, j] * x[j]
                y[i] = acc
                r = acc / x[i]
                if r < lo:
                    lo = r
                if r > hi:
                    hi = r
            if hi < INFINITY and hi - lo <= tol * hi:
                converged = True
                break
            # a shift by the current estimate breaks the rotation of
            # imprimitive blocks without moving the Perron vector
            shift = 0.0
            if it > shift_after:
                shift = 0.5 * (lo + hi)
            top = 0.0
            for i in range(n):
                y[i] = y[i] + shift * x[i]
                if y[i] > top:
                    top = y[i]
            if top == 0.0:
                break
            for i in range(n):
                x[i] = y[i] / top
            # an underflowed component would poison the next ratio
            underflow = False
            for i in range(n):
                if x[i] == 0.0:
                    underflow = True
            if underflow:
                break
    return 0.5 * (lo + hi), lo, hi, it, converged


def simulate_steps(const double[:, :, ::1] lin, const int[:, ::1] lin_idx,
                   const double[:, :, ::1] gain, const double[:, ::1] bias,
                   const int[:, ::1] map_idx, const int[:, :, :, ::1] delays,
                   double[:, :, ::1] states, unsigned char[::1] diverged,
                   double cutoff):
    """Advance every trajectory through its pre-drawn switch sequence.

    ``states[:, 0, :]`` holds the initial delay-space states on entry; the
    remaining steps are filled in place. Lag-0 coordinates come first,
    then lag 1, and so on.
    """
    cdef Py_ssize_t T = states.shape[0]
    cdef Py_ssize_t K = states.shape[1] - 1
    cdef Py_ssize_t dim = states.shape[2]
    cdef Py_ssize_t n = bias.shape[1]
    cdef Py_ssize_t t, k, i, j, q, p, m, kk
    cdef int d
    cdef double acc, v, g
    cdef bint bad

    with nogil:
        for t in range(T):
            for k in range(K):
                p = lin_idx[t, k]
                m = map_idx[t, k]
                bad = False
                for i in range(n):
                    acc = bias[m, i]
                    for j in range(n):
                        d = delays[t, k, i, j]
                        v = states[t, k, d * n + j]
                        acc = acc + lin[p, i, j] * v
                        g = gain[m, i, j]
                        acc = acc + g * tanh(v)
                    states[t, k + 1, i] = acc
                    if not isfinite(acc) or fabs(acc) > cutoff:
                        bad = True
                for q in range(n, dim):
                    states[t, k + 1, q] = states[t, k, q - n]
                if bad:
                    diverged[t] = 1
                    for kk in range(k + 1, K + 1):
                        for q in range(dim):
                            states[t, kk, q] = NAN
                    break


def product_log_norms(const double[:, :, ::1] mats, const int[:, ::1] idx, double[::1] out):
    """Log infinity-norms of the left products ``A_K ... A_1`` per sample.

    The running product is renormalised every step so the magnitude lives in
    the accumulated log, never in the floating-point entries.
    """
    cdef Py_ssize_t S = idx.shape[0]
    cdef Py_ssize_t K = idx.shape[1]
    cdef Py_ssize_t n = mats.shape[1]
    cdef Py_ssize_t s, k, i, j, l, a
    cdef double acc, norm, row, logacc
    cdef double[:, ::1] P = np.empty((n, n))
    cdef double[:, ::1] tmp = np.empty((n, n))

    with nogil:
        for s in range(S):
            for i in range(n):
                for j in range(n):
                    P[i, j] = 1.0 if i == j else 0.0
            logacc = 0.0
            for k in range(K):
                a = idx[s, k]
                norm = 0.0
                for i in range(n):
                    row = 0.0
                    for j in range(n):
                        acc = 0.0
                        for l in range(n):
                            acc = acc + mats[a, i, l] * P[l, j]
                        tmp[i, j] = acc
                        row = row + fabs(acc)
                    if row > norm:
                        norm = row
                if norm == 0.0:
                    logacc = -INFINITY
                    break
                for i in range(n):
                    for j in range(n):
                        P[i, j] = tmp[i, j] / norm
                logacc = logacc + log(norm)
            out[s] = logacc
