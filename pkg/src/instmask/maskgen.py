"""Instant mask generation from attention stacks.

Pipeline per step: average the parallel rounds, locate the content token
whose map best matches the start token's map, score every map against that
index map, double-threshold the scores into {-1, 0, +1} weights, take the
signed weighted sum of the maps (clamped at zero, max-normalized), smooth,
and binarize. The token weights are computed once, at the first step of a
session, and reused for all later steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionStack, aggregate_rounds
from .numerics import (GaussianParams, cosine_sim, gaussian_filter,
                       resize_nearest)
from . import _kernels


@dataclass(frozen=True)
class MaskGenConfig:
    """Thresholds for token filtering (gamma1/gamma2), binarization (phi),
    and the smoothing kernel applied to the refined map."""

    gamma1: float = 0.9
    gamma2: float = 0.6
    phi: float = 0.2
    gaussian: GaussianParams = field(default_factory=lambda: GaussianParams(0.5, 2))

    def __post_init__(self):
        if not (0.0 < self.phi < 1.0):
            raise ValueError(f"phi must be in (0, 1), got {self.phi}")
        if self.gamma1 <= self.gamma2:
            raise ValueError(
                f"gamma1 must exceed gamma2, got {self.gamma1} <= {self.gamma2}")


@dataclass(frozen=True)
class SimilarityVector:
    """Per-token cosine against the index token's map (start included)."""

    values: np.ndarray  # (N+1,)
    index: int


@dataclass(frozen=True)
class PositionVector:
    """Per-token weights in {-1, 0, +1} from double-thresholded similarities."""

    values: np.ndarray  # (N+1,) int8
    gamma1: float
    gamma2: float
    computed_at: int  # timestep of the step that produced it


@dataclass(frozen=True)
class BinaryMask:
    """A {0,1} grid plus the binarization threshold that produced it."""

    grid: np.ndarray  # uint8
    threshold_used: float

    @property
    def area_ratio(self) -> float:
        return float(self.grid.mean())

    def resize(self, target_h: int, target_w: int) -> "BinaryMask":
        return BinaryMask(grid=resize_nearest(self.grid, target_h, target_w),
                          threshold_used=self.threshold_used)


def index_token(stack: AttentionStack) -> int:
    """Content token whose map is most similar to the start map.

    The start token itself never competes; ties go to the lowest index.
    """
    stack.validate()
    start = stack.maps[0]
    if not start.any():
        raise ValueError("degenerate attention: start map is all zeros")
    flat = np.ascontiguousarray(
        stack.maps[1:].reshape(stack.n_tokens - 1, -1))
    if not flat.any(axis=1).all():
        raise ValueError("degenerate attention: a token map is all zeros")
    sims = np.asarray(_kernels.cosine_sim_many(flat, start.ravel()))
    return int(np.argmax(sims)) + 1


def similarity_vector(stack: AttentionStack, index: int) -> SimilarityVector:
    """Cosine of every map (start included) against the index token's map."""
    if not (1 <= index < stack.n_tokens):
        raise ValueError(f"index {index} outside [1, {stack.n_tokens - 1}]")
    ref = stack.maps[index]
    values = np.array([cosine_sim(stack.maps[i], ref)
                       for i in range(stack.n_tokens)])
    return SimilarityVector(values=values, index=index)


def position_vector(s: SimilarityVector, cfg: MaskGenConfig,
                    computed_at: int = 0) -> PositionVector:
    """Double-threshold similarities: +1 above gamma1, -1 below gamma2, else 0.

    Values exactly at a threshold fall into the 0 branch.
    """
    p = np.zeros(s.values.shape, dtype=np.int8)
    p[s.values > cfg.gamma1] = 1
    p[s.values < cfg.gamma2] = -1
    return PositionVector(values=p, gamma1=cfg.gamma1, gamma2=cfg.gamma2,
                          computed_at=computed_at)


def refine(stack: AttentionStack, p: PositionVector) -> np.ndarray:
    """Signed weighted sum of token maps, clamped at zero, max-normalized."""
    if p.values.shape[0] != stack.n_tokens:
        raise ValueError(
            f"weight length {p.values.shape[0]} != token count {stack.n_tokens}")
    # sequential accumulation keeps the result reproducible bit for bit
    combined = np.zeros(stack.maps.shape[1:])
    for i in range(stack.n_tokens):
        combined += float(p.values[i]) * stack.maps[i]
    np.clip(combined, 0.0, None, out=combined)
    peak = combined.max()
    if peak > 0:
        combined /= peak
    return combined


def make_mask(a_ref: np.ndarray, cfg: MaskGenConfig) -> BinaryMask:
    """Smooth the refined map and binarize at phi."""
    filtered = gaussian_filter(a_ref, cfg.gaussian)
    return BinaryMask(grid=(filtered > cfg.phi).astype(np.uint8),
                      threshold_used=cfg.phi)


def instant_mask(stacks: list[AttentionStack], cfg: MaskGenConfig,
                 p_cached: PositionVector | None = None,
                 ) -> tuple[BinaryMask, PositionVector]:
    """Mask for one step from that step's per-round stacks.

    Token weights are computed only when no cached vector is supplied, so an
    edit session pays the similarity pass exactly once (at its first step).
    """
    stack = aggregate_rounds(stacks)
    if p_cached is None:
        idx = index_token(stack)
        sims = similarity_vector(stack, idx)
        p = position_vector(sims, cfg, computed_at=stack.timestep)
    else:
        p = p_cached
    a_ref = refine(stack, p)
    return make_mask(a_ref, cfg), p
