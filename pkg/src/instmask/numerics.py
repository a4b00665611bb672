"""Low-level grid operations shared by every stage of the pipeline.

A "grid" is a 2-D float64 array of finite values (attention maps, refined
maps). All operations are pure functions; heavy loops run in the selected
kernel backend (compiled core or numpy fallback).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

Grid2D = np.ndarray  # 2-D float64, finite values


@dataclass(frozen=True)
class GaussianParams:
    """Sampled-Gaussian smoothing kernel: sigma in grid cells, half-width radius.

    radius must cover at least 3 sigma so the normalized kernel carries
    essentially all of the mass.
    """

    sigma: float = 1.0
    radius: int = 3

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.sigma > 0 and self.radius < math.ceil(3 * self.sigma):
            raise ValueError(
                f"radius {self.radius} too small for sigma {self.sigma}; "
                f"need >= {math.ceil(3 * self.sigma)}")

    def kernel(self) -> np.ndarray:
        """Normalized 1-D sampled Gaussian of length 2*radius + 1."""
        if self.sigma == 0:
            return np.ones(1)
        k = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        g = np.exp(-(k * k) / (2.0 * self.sigma * self.sigma))
        return g / g.sum()


def as_grid(values) -> Grid2D:
    """Coerce to a contiguous float64 grid, rejecting non-2-D or non-finite input."""
    g = np.ascontiguousarray(values, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid contains non-finite values")
    return g


def cosine_sim(a, b) -> float:
    """Cosine similarity of two same-shape grids, flattened.

    Raises for a shape mismatch or when either grid is all-zero (degenerate
    attention carries no direction to compare).
    """
    a = as_grid(a)
    b = as_grid(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    af, bf = a.ravel(), b.ravel()
    if not af.any() or not bf.any():
        raise ValueError("degenerate grid: all-zero input to cosine_sim")
    return float(_kernels.cosine_sim(af, bf))


def gaussian_filter(g, params: GaussianParams) -> Grid2D:
    """Separable Gaussian smoothing with symmetric (edge-repeating) reflection.

    sigma == 0 returns the input unchanged.
    """
    g = as_grid(g)
    if params.sigma == 0:
        return g.copy()
    return np.asarray(_kernels.gaussian_blur(g, params.kernel()))


def softmax_rows(m, scale: float) -> np.ndarray:
    """Scale-then-softmax each row of a matrix; rows sum to 1."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    return np.asarray(_kernels.softmax_rows(m, float(scale)))


def resize_nearest(mask, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor upsample of a {0,1} grid. Targets must not shrink it."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    sh, sw = mask.shape
    if target_h < sh or target_w < sw:
        raise ValueError(
            f"target ({target_h}x{target_w}) smaller than source ({sh}x{sw})")
    return np.asarray(_kernels.resize_nearest(mask, int(target_h), int(target_w)))


def kernels_backend() -> str:
    """Name of the active kernel backend ("cy" or "py")."""
    return _kernels.BACKEND
