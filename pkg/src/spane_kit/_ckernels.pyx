# cython: language_level=3
"""Compiled inner loops. Semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def topk_desc(const double[:, ::1] sims, Py_ssize_t k):
    """Indices of the ``k`` largest entries per row, best first, ties by lower index."""
    cdef Py_ssize_t n_rows = sims.shape[0]
    cdef Py_ssize_t n_cols = sims.shape[1]
    if k < 1 or k > n_cols:
        raise ValueError(f"k={k} outside [1, {n_cols}]")
    out = np.empty((n_rows, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef double[::1] best = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t i, j, p, q, filled
    cdef double v
    with nogil:
        for i in range(n_rows):
            filled = 0
            for j in range(n_cols):
                v = sims[i, j]
                if filled == k and not (v > best[k - 1]):
                    continue
                # first slot holding a strictly smaller value; equal values keep
                # their earlier (lower-index) position
                p = filled if filled < k else k - 1
                while p > 0 and best[p - 1] < v:
                    p -= 1
                if filled < k:
                    filled += 1
                q = filled - 1
                while q > p:
                    best[q] = best[q - 1]
                    idx[i, q] = idx[i, q - 1]
                    q -= 1
                best[p] = v
                idx[i, p] = j
    return out


def ksg_counts(const double[::1] x, const double[::1] y, Py_ssize_t k):
    """Marginal neighbour counts for the KSG estimator (max-norm, strict <)."""
    cdef Py_ssize_t n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y differ in length")
    if k < 1 or k > n - 1:
        raise ValueError(f"k={k} outside [1, {n - 1}]")
    nx_arr = np.empty(n, dtype=np.int64)
    ny_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] nx = nx_arr
    cdef cnp.int64_t[::1] ny = ny_arr
    cdef double[::1] buf = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t i, j, p, filled
    cdef cnp.int64_t cx, cy
    cdef double dx, dy, dz, eps
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(n):
                if j == i:
                    continue
                dx = fabs(x[i] - x[j])
                dy = fabs(y[i] - y[j])
                dz = dx if dx > dy else dy
                if filled == k and not (dz < buf[k - 1]):
                    continue
                p = filled if filled < k else k - 1
                while p > 0 and buf[p - 1] > dz:
                    buf[p] = buf[p - 1]
                    p -= 1
                buf[p] = dz
                if filled < k:
                    filled += 1
            eps = buf[k - 1]
            cx = 0
            cy = 0
            for j in range(n):
                if j == i:
                    continue
                if fabs(x[i] - x[j]) < eps:
                    cx += 1
                if fabs(y[i] - y[j]) < eps:
                    cy += 1
            nx[i] = cx
            ny[i] = cy
    return nx_arr, ny_arr


def yin_pick(const double[:, ::1] diff, Py_ssize_t tau_min, Py_ssize_t tau_max,
             double threshold):
    """Cumulative-mean-normalised dip search with parabolic refinement.

    ``diff`` holds the difference function for lags ``0..tau_max``.
    Returns the fractional period in samples, 0 where no dip qualifies.
    """
    cdef Py_ssize_t n_frames = diff.shape[0]
    if diff.shape[1] != tau_max + 1:
        raise ValueError("difference function width must be tau_max + 1")
    if tau_min < 1 or tau_min >= tau_max:
        raise ValueError("need 1 <= tau_min < tau_max")
    out = np.zeros(n_frames, dtype=np.float64)
    cdef double[::1] period = out
    cdef double[::1] cm = np.empty(tau_max + 1, dtype=np.float64)
    cdef Py_ssize_t f, t, tau
    cdef double cum, a, b, c, den, shift
    with nogil:
        for f in range(n_frames):
            cm[0] = 1.0
            cum = 0.0
            for t in range(1, tau_max + 1):
                cum = cum + diff[f, t]
                if cum > 0:
                    cm[t] = diff[f, t] * t / cum
                else:
                    cm[t] = 1.0
            tau = -1
            for t in range(tau_min, tau_max):
                if cm[t] < threshold:
                    tau = t
                    break
            if tau < 0:
                continue
            while tau + 1 < tau_max and cm[tau + 1] < cm[tau]:
                tau += 1
            a = cm[tau - 1]
            b = cm[tau]
            c = cm[tau + 1]
            den = a - 2.0 * b + c
            if den != 0:
                shift = 0.5 * (a - c) / den
            else:
                shift = 0.0
            period[f] = tau + shift
    return out
