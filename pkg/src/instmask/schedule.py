"""Noise schedule construction and forward/reverse diffusion arithmetic.

The schedule is the standard linear-beta ramp; inference runs on an evenly
strided subset of the training timesteps. The reverse update is the
algebraic inversion of the forward noising under a shared noise term
(deterministic part), plus an optional sigma_t * z perturbation:

    x0_hat  = (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t)
    x_prev  = sqrt(abar_prev) * x0_hat + sqrt(1 - abar_prev) * eps + sigma_t * z

with abar_prev taken from the previous strided timestep (1.0 at the final
step, where z is also forced to zero, so an exact noise prediction lands
exactly on the clean latent).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LatentImage = np.ndarray  # (channels, height, width) float64


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    steps: int
    timesteps: np.ndarray = field(repr=False)  # strided, ascending

    def stride(self) -> int:
        return self.T // self.steps

    def is_strided(self, t: int) -> bool:
        return 0 <= t < self.T and t % self.stride() == 0 and t in self.timesteps

    def prev_timestep(self, t: int) -> int | None:
        """Previous strided timestep, or None when t is the final (lowest) one."""
        if not self.is_strided(t):
            raise ValueError(f"timestep {t} is not on the strided grid")
        return t - self.stride() if t != self.timesteps[0] else None

    def alpha_bar_prev(self, t: int) -> float:
        prev = self.prev_timestep(t)
        return 1.0 if prev is None else float(self.alpha_bar[prev])

    def strided_upto(self, tau: int) -> np.ndarray:
        """Strided timesteps <= tau, descending (the guided-loop order)."""
        return self.timesteps[self.timesteps <= tau][::-1].copy()


def build_schedule(T: int = 1000, beta_start: float = 1e-4,
                   beta_end: float = 0.02, steps: int = 50) -> NoiseSchedule:
    """Linear-beta schedule with `steps` evenly strided inference timesteps."""
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    if not (1 <= steps <= T):
        raise ValueError(f"steps must be in [1, T], got steps={steps}, T={T}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    timesteps = np.arange(steps, dtype=np.int64) * (T // steps)
    return NoiseSchedule(T=T, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma,
                         steps=steps, timesteps=timesteps)


def timestep_from_strength(r: float, T: int) -> int:
    """Starting timestep for a noise strength r in [0, 1], clamped to [0, T-1]."""
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"strength must be in [0, 1], got {r}")
    tau = int(np.floor(r * T + 0.5))
    return min(max(tau, 0), T - 1)


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"latent shape mismatch: {a.shape} vs {b.shape}")


def add_noise(x0: LatentImage, t: int, eps: LatentImage,
              s: NoiseSchedule) -> LatentImage:
    """Noisy latent at timestep t: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_shapes(x0, eps)
    if not (0 <= t < s.T):
        raise ValueError(f"timestep {t} outside [0, {s.T})")
    ab = s.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_clean(x_t: LatentImage, t: int, eps: LatentImage,
                  s: NoiseSchedule) -> LatentImage:
    """Solve the forward noising for the clean latent given the noise."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_shapes(x_t, eps)
    ab = s.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def reverse_step(x_t: LatentImage, eps_pred: LatentImage, t: int,
                 z: LatentImage | float, s: NoiseSchedule) -> LatentImage:
    """One reverse update from strided timestep t to its predecessor.

    z is the ancestral noise term; it is forced to zero on the final step.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    _check_shapes(x_t, eps_pred)
    ab = float(s.alpha_bar[t])
    ab_prev = s.alpha_bar_prev(t)  # validates t is on the grid
    x0_hat = (x_t - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab)
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_pred
    if s.prev_timestep(t) is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim:
            _check_shapes(x_t, z)
        out = out + s.sigma[t] * z
    return out


def encode_image(image_u8: np.ndarray) -> LatentImage:
    """Toy encoder: scale RGB to [-1, 1] and 2x average-pool to latent space."""
    img = np.asarray(image_u8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    if h % 2 or w % 2:
        raise ValueError(f"image dimensions must be even, got {h}x{w}")
    x = img.astype(np.float64) / 127.5 - 1.0
    x = np.transpose(x, (2, 0, 1))
    return x.reshape(3, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def decode_latent(x: LatentImage) -> np.ndarray:
    """Toy decoder: 2x nearest-neighbor upsample and rescale to 8-bit RGB."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected (3, h, w) latent, got {x.shape}")
    up = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    img = np.clip(np.rint((up + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return np.transpose(img, (1, 2, 0))
