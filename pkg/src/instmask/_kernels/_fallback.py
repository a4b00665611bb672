"""Pure numpy implementations of the grid kernels.

Used when the compiled extension is unavailable (or forced via
``INSTMASK_KERNELS=py``). Must match ``_core.pyx`` semantics exactly;
the suite cross-checks both paths.
"""

import numpy as np


def cosine_sim(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def cosine_sim_many(rows, ref):
    rows = np.asarray(rows, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1) * np.linalg.norm(ref)
    return rows @ ref / norms


def softmax_rows(m, scale):
    z = np.asarray(m, dtype=np.float64) / scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def gaussian_blur(g, kernel):
    g = np.asarray(g, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    radius = (kernel.size - 1) // 2
    padded = np.pad(g, ((0, 0), (radius, radius)), mode="symmetric")
    tmp = np.zeros_like(g)
    for k in range(kernel.size):
        tmp += kernel[k] * padded[:, k:k + g.shape[1]]
    padded = np.pad(tmp, ((radius, radius), (0, 0)), mode="symmetric")
    out = np.zeros_like(g)
    for k in range(kernel.size):
        out += kernel[k] * padded[k:k + g.shape[0], :]
    return out


def resize_nearest(src, th, tw):
    src = np.asarray(src, dtype=np.uint8)
    sh, sw = src.shape
    ri = (np.arange(th) * sh) // th
    ci = (np.arange(tw) * sw) // tw
    return src[np.ix_(ri, ci)]


def blend_masked(a, b, m):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)[None, :, :]
    return m * a + (1.0 - m) * b
