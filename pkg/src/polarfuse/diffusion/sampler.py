"""Deterministic (eta = 0) and stochastic DDIM sampling."""

from __future__ import annotations

import numpy as np

from .schedule import NoiseSchedule

#: below this alpha_bar the noise prediction carries no signal about x0
TERMINAL_ALPHA_BAR = 1e-12


def forward_noising(z0, eps, t, schedule: NoiseSchedule):
    """``sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps``; ``t`` is a scalar or one per batch item."""
    if np.shape(z0) != np.shape(eps):
        raise ValueError(f"z0 {np.shape(z0)} and eps {np.shape(eps)} differ")
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t >= schedule.T):
        raise IndexError(f"timestep out of range [0, {schedule.T})")
    ab = schedule.alpha_bar[t]
    if ab.ndim:
        ab = ab.reshape((-1,) + (1,) * (np.ndim(z0) - 1))
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_x0(z_t, eps_hat, alpha_bar_t):
    """Clean-sample estimate from a noise prediction.

    At zero SNR the estimate is undefined; the prior mean 0 is returned.
    """
    if alpha_bar_t <= TERMINAL_ALPHA_BAR:
        return np.zeros_like(z_t)
    return (z_t - np.sqrt(1.0 - alpha_bar_t) * eps_hat) / np.sqrt(alpha_bar_t)


def ddim_sample(
    denoise, z_f, schedule: NoiseSchedule, timesteps, shape, rng, eta=0.0, clip=1.0, z_init=None, denoise_x0=None
):
    """Run DDIM over ``timesteps`` (visiting order, descending).

    ``denoise(z_t, t, z_f)`` returns the predicted noise. At zero-SNR steps
    the noise carries no information about x0, so ``denoise_x0`` (same
    signature, returns x0) is called instead; without it the estimate is 0.
    ``clip`` bounds the x0 estimate to ``[-clip, clip]`` (``None`` disables).
    Returns the final x0 estimate.
    """
    x = rng.standard_normal(shape) if z_init is None else np.array(z_init, dtype=np.float64)
    ab = schedule.alpha_bar
    x0 = x
    for i, t in enumerate(timesteps):
        tt = np.full(shape[0], t)
        if ab[t] <= TERMINAL_ALPHA_BAR and denoise_x0 is not None:
            x0 = denoise_x0(x, tt, z_f)
        else:
            x0 = predict_x0(x, denoise(x, tt, z_f), ab[t])
        if clip is not None:
            x0 = np.clip(x0, -clip, clip)
        if i + 1 == len(timesteps):
            break
        ab_prev = ab[timesteps[i + 1]]
        # recompute the noise direction consistent with the (possibly clipped) x0
        if ab[t] > TERMINAL_ALPHA_BAR:
            eps_dir = (x - np.sqrt(ab[t]) * x0) / np.sqrt(1.0 - ab[t])
        else:
            eps_dir = x
        sigma = 0.0
        if eta:
            sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab[t]) * (1.0 - ab[t] / ab_prev))
        x = np.sqrt(ab_prev) * x0 + np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_dir
        if sigma:
            x = x + sigma * rng.standard_normal(shape)
    return x0
