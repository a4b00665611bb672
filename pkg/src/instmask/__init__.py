"""Instant attention-derived semantic masks for latent-diffusion editing.

The pipeline turns per-token cross-attention maps into a binary edit mask
at every denoising step, guides the reverse diffusion with it, and
finalizes through mask-clamped inpainting. Ships with analytic denoiser
backends, a synthetic evaluation corpus, and segmentation-style editing
metrics, all deterministic under a single seed.
"""

from .editor import (DenoiserBackend, EditConfig, EditSession, OracleBackend,
                     blend_latents, edit, eps_cfg, guided_step,
                     inpaint_finalize)
from .maskgen import (BinaryMask, MaskGenConfig, PositionVector,
                      SimilarityVector, index_token, instant_mask, make_mask,
                      position_vector, refine, similarity_vector)
from .numerics import (GaussianParams, cosine_sim, gaussian_filter,
                       kernels_backend, resize_nearest, softmax_rows)
from .schedule import (NoiseSchedule, add_noise, build_schedule,
                       decode_latent, encode_image, reverse_step,
                       timestep_from_strength)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "DenoiserBackend", "EditConfig", "EditSession",
    "GaussianParams", "MaskGenConfig", "NoiseSchedule", "OracleBackend",
    "PositionVector", "SimilarityVector", "add_noise", "blend_latents",
    "build_schedule", "cosine_sim", "decode_latent", "edit", "encode_image",
    "eps_cfg", "gaussian_filter", "guided_step", "index_token",
    "inpaint_finalize", "instant_mask", "kernels_backend", "make_mask",
    "position_vector", "refine", "resize_nearest", "reverse_step",
    "similarity_vector", "softmax_rows", "timestep_from_strength",
    "__version__",
]
