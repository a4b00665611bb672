# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled grid kernels: the hot inner loops of the mask pipeline.

Semantics must stay in lockstep with ``_fallback.py``; the test suite
cross-checks both against dense oracles.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) nogil:
    # symmetric reflection with edge repeat: -1 -> 0, n -> n-1
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        if i >= n:
            i = 2 * n - 1 - i
    return i


def cosine_sim(double[::1] a, double[::1] b):
    """Cosine of two equal-length flat vectors. Caller checks norms."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double dot = 0.0, na = 0.0, nb = 0.0
    for i in range(n):
        dot += a[i] * b[i]
        na += a[i] * a[i]
        nb += b[i] * b[i]
    return dot / (sqrt(na) * sqrt(nb))


def cosine_sim_many(double[:, ::1] rows, double[::1] ref):
    """Cosine of every row of ``rows`` against ``ref``. Returns (n,) array."""
    cdef Py_ssize_t r, i, n = rows.shape[0], m = rows.shape[1]
    cdef double dot, nr, nref = 0.0
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(m):
        nref += ref[i] * ref[i]
    nref = sqrt(nref)
    for r in range(n):
        dot = 0.0
        nr = 0.0
        for i in range(m):
            dot += rows[r, i] * ref[i]
            nr += rows[r, i] * rows[r, i]
        o[r] = dot / (sqrt(nr) * nref)
    return out


def softmax_rows(double[:, ::1] m, double scale):
    """Row-wise softmax of m / scale with max subtraction for stability."""
    cdef Py_ssize_t r, c, rows = m.shape[0], cols = m.shape[1]
    cdef double mx, s, v
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    for r in range(rows):
        mx = m[r, 0] / scale
        for c in range(1, cols):
            v = m[r, c] / scale
            if v > mx:
                mx = v
        s = 0.0
        for c in range(cols):
            o[r, c] = exp(m[r, c] / scale - mx)
            s += o[r, c]
        for c in range(cols):
            o[r, c] /= s
    return out


def gaussian_blur(double[:, ::1] g, double[::1] kernel):
    """Separable convolution with a normalized 1-D kernel, symmetric padding."""
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1]
    cdef Py_ssize_t radius = (kernel.shape[0] - 1) // 2
    cdef Py_ssize_t r, c, k, j
    cdef double acc
    tmp = np.empty((h, w), dtype=np.float64)
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] t = tmp
    cdef double[:, ::1] o = out
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for k in range(-radius, radius + 1):
                j = _reflect(c + k, w)
                acc += kernel[k + radius] * g[r, j]
            t[r, c] = acc
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for k in range(-radius, radius + 1):
                j = _reflect(r + k, h)
                acc += kernel[k + radius] * t[j, c]
            o[r, c] = acc
    return out


def resize_nearest(cnp.uint8_t[:, ::1] src, Py_ssize_t th, Py_ssize_t tw):
    """Nearest-neighbor upsample of a binary grid to (th, tw)."""
    cdef Py_ssize_t sh = src.shape[0], sw = src.shape[1]
    cdef Py_ssize_t r, c
    out = np.empty((th, tw), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    for r in range(th):
        for c in range(tw):
            o[r, c] = src[(r * sh) // th, (c * sw) // tw]
    return out


def blend_masked(double[:, :, ::1] a, double[:, :, ::1] b, double[:, ::1] m):
    """Per-cell convex blend m*a + (1-m)*b, mask broadcast over channels."""
    cdef Py_ssize_t ch = a.shape[0], h = a.shape[1], w = a.shape[2]
    cdef Py_ssize_t c, r, q
    cdef double mv
    out = np.empty((ch, h, w), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for r in range(h):
        for q in range(w):
            mv = m[r, q]
            for c in range(ch):
                o[c, r, q] = mv * a[c, r, q] + (1.0 - mv) * b[c, r, q]
    return out
