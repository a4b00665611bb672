"""Seeding and worker-count helpers."""

from __future__ import annotations

import os

import numpy as np


def seeded_rng(*entropy: int) -> np.random.Generator:
    """Generator derived deterministically from a tuple of integers."""
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def worker_count() -> int:
    """Parallelism cap from INSTMASK_THREADS (default 1)."""
    raw = os.environ.get("INSTMASK_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"INSTMASK_THREADS must be >= 1, got {raw!r}")
    return n
