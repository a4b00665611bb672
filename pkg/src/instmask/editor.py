"""Mask-guided denoising and inpainting finalization.

An edit run noises the input latent to the strength-derived timestep, then
walks the strided schedule back to zero keeping n parallel trajectories.
Each step reads attention from the denoiser backend, produces the instant
mask, and blends the predicted latent with a freshly noised copy of the
original so unmasked content is continuously re-anchored. The mask of the
last step drives a final inpainting pass that regenerates only the masked
region from pure noise while clamping everything else to the original.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .attention import AttentionStack, TextFeatures, TokenSequence, encode_text
from .maskgen import BinaryMask, MaskGenConfig, PositionVector, instant_mask
from .schedule import (LatentImage, NoiseSchedule, add_noise, build_schedule,
                       decode_latent, encode_image, reverse_step,
                       timestep_from_strength)

_STREAM_TRAJ, _STREAM_Y, _STREAM_Z, _STREAM_INPAINT = 11, 12, 13, 14


class DenoiserBackend:
    """Contract for noise predictors: deterministic in (x_t, t, cond, seed)."""

    def predict(self, x_t: LatentImage, t: int,
                cond: TextFeatures | None) -> tuple[LatentImage, AttentionStack]:
        raise NotImplementedError


class OracleBackend(DenoiserBackend):
    """Analytic predictor pointing every step at a known target latent.

    The attention it reports is uniform across tokens, so the derived mask
    covers the whole frame; useful for exercising the schedule arithmetic
    end to end.
    """

    def __init__(self, target: LatentImage, schedule: NoiseSchedule,
                 n_content_tokens: int = 3):
        self.target = np.asarray(target, dtype=np.float64)
        self.schedule = schedule
        n = n_content_tokens + 1
        self._stack_maps = np.full((n, 16, 16), 1.0 / n)

    def predict(self, x_t, t, cond):
        ab = self.schedule.alpha_bar[t]
        eps = (np.asarray(x_t, dtype=np.float64)
               - np.sqrt(ab) * self.target) / np.sqrt(1.0 - ab)
        return eps, AttentionStack(maps=self._stack_maps, timestep=t)


@dataclass(frozen=True)
class EditConfig:
    strength: float = 0.5
    steps: int = 50
    cfg_scale: float = 7.5
    rounds: int = 3
    maskgen: MaskGenConfig = field(default_factory=MaskGenConfig)
    seed: int = 0
    d_k: int = 32

    def __post_init__(self):
        if not (0.0 <= self.strength <= 1.0):
            raise ValueError(f"strength must be in [0, 1], got {self.strength}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.cfg_scale < 0:
            raise ValueError(f"cfg scale must be >= 0, got {self.cfg_scale}")

    def to_json_dict(self) -> dict:
        return {
            "strength": self.strength,
            "steps": self.steps,
            "cfg_scale": self.cfg_scale,
            "rounds": self.rounds,
            "seed": self.seed,
            "d_k": self.d_k,
            "maskgen": {
                "gamma1": self.maskgen.gamma1,
                "gamma2": self.maskgen.gamma2,
                "phi": self.maskgen.phi,
                "gaussian_sigma": self.maskgen.gaussian.sigma,
                "gaussian_radius": self.maskgen.gaussian.radius,
            },
        }


@dataclass
class StepRecord:
    timestep: int
    mask: BinaryMask
    latent: LatentImage  # trajectory-0 snapshot after the step


@dataclass
class GuidedState:
    """Mutable loop state: n trajectories, the anchor latent, and RNG streams."""

    latents: list[LatentImage]
    x_orig: LatentImage
    cond: TextFeatures | None
    p: PositionVector | None = None
    trace: list[StepRecord] = field(default_factory=list)
    rng_y: np.random.Generator | None = None
    rng_z: list[np.random.Generator] = field(default_factory=list)


@dataclass
class EditSession:
    config: EditConfig
    tau: int
    timesteps: list[int]
    trace: list[StepRecord]
    final_mask: BinaryMask          # attention resolution
    p: PositionVector
    output_latent: LatentImage
    output_image: np.ndarray        # (H, W, 3) uint8
    timings: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "config": self.config.to_json_dict(),
            "tau": self.tau,
            "timesteps": [int(t) for t in self.timesteps],
            "steps": [{"timestep": int(r.timestep),
                       "mask_area_ratio": r.mask.area_ratio}
                      for r in self.trace],
            "final_mask_area_ratio": self.final_mask.area_ratio,
            "position_vector": [int(v) for v in self.p.values],
            "position_computed_at": int(self.p.computed_at),
        }


def eps_cfg(backend: DenoiserBackend, x_t: LatentImage, t: int,
            cond: TextFeatures | None, scale: float) -> LatentImage:
    """Classifier-free guided noise: uncond + scale * (cond - uncond)."""
    if scale < 0:
        raise ValueError(f"guidance scale must be >= 0, got {scale}")
    eps_u, _ = backend.predict(x_t, t, None)
    if scale == 0:
        return eps_u
    eps_c, _ = backend.predict(x_t, t, cond)
    return eps_u + scale * (eps_c - eps_u)


def blend_latents(x_pred: LatentImage, y_t: LatentImage,
                  mask: BinaryMask) -> LatentImage:
    """Masked cells from x_pred, the rest from y_t; mask spans all channels."""
    x_pred = np.asarray(x_pred, dtype=np.float64)
    y_t = np.asarray(y_t, dtype=np.float64)
    if x_pred.shape != y_t.shape:
        raise ValueError(f"latent shape mismatch: {x_pred.shape} vs {y_t.shape}")
    if mask.grid.shape != x_pred.shape[1:]:
        raise ValueError(
            f"mask {mask.grid.shape} does not match latent {x_pred.shape[1:]}")
    m = np.ascontiguousarray(mask.grid, dtype=np.float64)
    return np.asarray(_kernels.blend_masked(
        np.ascontiguousarray(x_pred), np.ascontiguousarray(y_t), m))


def guided_step(state: GuidedState, t: int, backend: DenoiserBackend,
                schedule: NoiseSchedule, cfg: EditConfig,
                mask_override: BinaryMask | None = None) -> GuidedState:
    """Advance all trajectories one step under the step's instant mask.

    The mask comes from round-aggregated attention and is shared by every
    trajectory; token weights are cached in the state after the first step.
    mask_override bypasses mask generation (used to pin the blend behavior).
    """
    stacks = []
    eps_guided = []
    for x in state.latents:
        eps_c, stack = backend.predict(x, t, state.cond)
        eps_u, _ = backend.predict(x, t, None)
        stacks.append(stack)
        eps_guided.append(eps_u + cfg.cfg_scale * (eps_c - eps_u))

    if mask_override is None:
        mask, p = instant_mask(stacks, cfg.maskgen, state.p)
        state.p = p
    else:
        mask = mask_override

    shape = state.x_orig.shape
    t_prev = schedule.prev_timestep(t)
    if t_prev is None:
        y = state.x_orig
    else:
        y = add_noise(state.x_orig, t_prev,
                      state.rng_y.standard_normal(shape), schedule)

    mask_latent = mask.resize(shape[1], shape[2])
    for k, x in enumerate(state.latents):
        z = state.rng_z[k].standard_normal(shape)
        x_pred = reverse_step(x, eps_guided[k], t, z, schedule)
        state.latents[k] = blend_latents(x_pred, y, mask_latent)

    state.trace.append(StepRecord(timestep=t, mask=mask,
                                  latent=state.latents[0].copy()))
    return state


def inpaint_finalize(x_orig: LatentImage, m_final: BinaryMask,
                     cond: TextFeatures | None, backend: DenoiserBackend,
                     schedule: NoiseSchedule, cfg: EditConfig) -> LatentImage:
    """Regenerate the masked region from pure noise over the full schedule.

    At every step the unmasked region is clamped to a freshly noised copy of
    the original; after the last step it is clamped to the original itself,
    so unmasked cells are preserved exactly.
    """
    shape = x_orig.shape
    if m_final.grid.shape != shape[1:]:
        raise ValueError(
            f"mask {m_final.grid.shape} does not match latent {shape[1:]}")
    ss = np.random.SeedSequence([cfg.seed, _STREAM_INPAINT])
    rng_init, rng_clamp, rng_z = [np.random.default_rng(c) for c in ss.spawn(3)]

    x = rng_init.standard_normal(shape)
    for t in schedule.timesteps[::-1]:
        y_t = add_noise(x_orig, int(t), rng_clamp.standard_normal(shape),
                        schedule)
        x = blend_latents(x, y_t, m_final)
        eps = eps_cfg(backend, x, int(t), cond, cfg.cfg_scale)
        z = rng_z.standard_normal(shape)
        x = reverse_step(x, eps, int(t), z, schedule)
    return blend_latents(x, x_orig, m_final)


def edit(image_u8: np.ndarray, edit_tokens: TokenSequence, cfg: EditConfig,
         backend: DenoiserBackend,
         schedule: NoiseSchedule | None = None) -> EditSession:
    """Run the full pipeline on one image; returns the session with trace."""
    s = schedule if schedule is not None else build_schedule(steps=cfg.steps)
    tau = timestep_from_strength(cfg.strength, s.T)
    if tau == 0:
        raise ValueError(
            f"strength too low: r={cfg.strength} leaves no denoising steps")

    t0 = time.perf_counter()
    x_orig = encode_image(image_u8)
    cond = encode_text(edit_tokens, cfg.d_k, cfg.seed)

    ss_traj = np.random.SeedSequence([cfg.seed, _STREAM_TRAJ])
    latents = [add_noise(x_orig, tau,
                         np.random.default_rng(c).standard_normal(x_orig.shape),
                         s)
               for c in ss_traj.spawn(cfg.rounds)]
    ss_z = np.random.SeedSequence([cfg.seed, _STREAM_Z])
    state = GuidedState(
        latents=latents, x_orig=x_orig, cond=cond,
        rng_y=np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _STREAM_Y])),
        rng_z=[np.random.default_rng(c) for c in ss_z.spawn(cfg.rounds)])
    t1 = time.perf_counter()

    timesteps = [int(t) for t in s.strided_upto(tau)]
    for t in timesteps:
        guided_step(state, t, backend, s, cfg)
    if not state.trace:
        raise ValueError("empty guided loop: no strided timesteps below tau")
    t2 = time.perf_counter()

    final_mask = state.trace[-1].mask
    mask_latent = final_mask.resize(x_orig.shape[1], x_orig.shape[2])
    output_latent = inpaint_finalize(x_orig, mask_latent, cond, backend, s, cfg)
    t3 = time.perf_counter()

    return EditSession(
        config=cfg, tau=tau, timesteps=timesteps, trace=state.trace,
        final_mask=final_mask, p=state.p, output_latent=output_latent,
        output_image=decode_latent(output_latent),
        timings={"noising_s": t1 - t0, "guided_loop_s": t2 - t1,
                 "inpainting_s": t3 - t2})
