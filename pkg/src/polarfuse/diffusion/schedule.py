"""Noise schedules and sampling timestep subsequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray
    zero_snr: bool = False

    @property
    def T(self):
        return len(self.alpha_bar)


def build_schedule(T=1000, beta_start=8.5e-4, beta_end=1.2e-2, zero_snr=False, snr_shift=1.0) -> NoiseSchedule:
    """Scaled-linear schedule, optionally rescaled to zero terminal SNR.

    The rescale maps ``sqrt(alpha_bar)`` linearly so that its first value is
    kept and its last becomes exactly 0; the final beta is then 1.

    ``snr_shift`` divides the signal-to-noise ratio at every step,
    ``ab -> ab / (ab + s * (1 - ab))``. Redundant latents (smooth maps packed
    by space-to-depth) stay easy to denoise far into the schedule; a shift
    moves training weight to the noise levels where the conditioning matters.
    """
    if not (0 < beta_start < beta_end < 1):
        raise ConfigError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    if T < 2:
        raise ConfigError(f"need T >= 2, got {T}")
    if not snr_shift > 0:
        raise ConfigError(f"snr_shift must be positive, got {snr_shift}")
    betas = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), T, dtype=np.float64) ** 2
    alpha_bar = np.cumprod(1.0 - betas)
    if zero_snr:
        root = np.sqrt(alpha_bar)
        first, last = root[0], root[-1]
        root = (root - last) * (first / (first - last))
        root[-1] = 0.0
        alpha_bar = root**2
    if snr_shift != 1.0:
        alpha_bar = alpha_bar / (alpha_bar + snr_shift * (1.0 - alpha_bar))
    if zero_snr or snr_shift != 1.0:
        alphas = np.concatenate([alpha_bar[:1], alpha_bar[1:] / alpha_bar[:-1]])
        betas = 1.0 - alphas
    alphas = 1.0 - betas
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bar=alpha_bar, zero_snr=zero_snr)


def leading_timesteps(T, steps):
    """Evenly spaced from 0 with stride ``T // steps``, returned in visiting (descending) order."""
    if not 1 <= steps <= T:
        raise ConfigError(f"steps must lie in [1, {T}], got {steps}")
    ratio = T // steps
    return [int(t) for t in (np.arange(steps) * ratio)[::-1]]


def trailing_timesteps(T, steps):
    """``round(T - 1 - i * T / steps)`` for ``i = 0 .. steps - 1``; always starts at ``T - 1``."""
    if not 1 <= steps <= T:
        raise ConfigError(f"steps must lie in [1, {T}], got {steps}")
    i = np.arange(steps)
    return [int(t) for t in np.round(T - 1 - i * (T / steps)).astype(np.int64)]
