"""Kernel backend selection.

The compiled core is preferred when present; ``INSTMASK_KERNELS`` forces a
backend ("cy" or "py"). The selected module is exposed as ``impl`` and its
name as ``BACKEND`` so callers and benchmarks can introspect the choice.
"""

import os

_forced = os.environ.get("INSTMASK_KERNELS", "").strip().lower()
if _forced not in ("", "py", "cy"):
    raise RuntimeError(
        f"INSTMASK_KERNELS must be 'py' or 'cy', got {_forced!r}")

if _forced == "py":
    from . import _fallback as impl
    BACKEND = "py"
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
        BACKEND = "cy"
    except ImportError:
        if _forced == "cy":
            raise
        from . import _fallback as impl
        BACKEND = "py"

cosine_sim = impl.cosine_sim
cosine_sim_many = impl.cosine_sim_many
softmax_rows = impl.softmax_rows
gaussian_blur = impl.gaussian_blur
resize_nearest = impl.resize_nearest
blend_masked = impl.blend_masked

__all__ = [
    "BACKEND", "impl", "cosine_sim", "cosine_sim_many", "softmax_rows",
    "gaussian_blur", "resize_nearest", "blend_masked",
]
