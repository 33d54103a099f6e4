"""Sampling-based prediction in the two inference configurations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .sampler import ddim_sample
from .schedule import leading_timesteps, trailing_timesteps

MODES = {"standard": 50, "accelerated": 4}


def mode_timesteps(mode, T):
    """``standard``: 50 leading-spaced steps; ``accelerated``: 4 trailing steps."""
    if mode == "standard":
        return leading_timesteps(T, MODES["standard"])
    if mode == "accelerated":
        return trailing_timesteps(T, MODES["accelerated"])
    raise ConfigError(f"unknown inference mode {mode!r}; expected one of {tuple(MODES)}")


@dataclass
class Prediction:
    prediction: np.ndarray  # (N, 1, H, W) depth in [-1, 1] or (N, 3, H, W) unit normals
    alpha: np.ndarray | None  # (N, 1, h, w) on the latent grid
    denoiser_calls: int


def infer(model, rgb, pol, mode="standard", seed=0, batch_size=16, clip=1.0):
    """Predict for an image batch (NCHW, values in [-1, 1]).

    Each image draws its initial noise from a generator keyed by
    ``(seed, position in the batch)``, so results do not depend on
    ``batch_size``.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    pol = np.asarray(pol, dtype=np.float64)
    squeeze = rgb.ndim == 3
    if squeeze:
        rgb, pol = rgb[None], pol[None]
    schedule = model.schedule
    timesteps = mode_timesteps(mode, schedule.T)
    calls_before = model.denoise_calls
    preds, alphas = [], []
    for start in range(0, rgb.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        z_f, alpha = model.condition(rgb[sl], pol[sl])
        n = z_f.shape[0]
        shape = (n, model.z_channels) + z_f.shape[2:]
        z_init = np.stack(
            [np.random.default_rng([seed, start + i]).standard_normal(shape[1:]) for i in range(n)]
        )
        z0 = ddim_sample(
            model.denoise,
            z_f,
            schedule,
            timesteps,
            shape,
            rng=np.random.default_rng(seed),
            clip=clip,
            z_init=z_init,
            denoise_x0=model.denoise_x0,
        )
        preds.append(model.codec.decode(z0))
        alphas.append(alpha)
    pred = np.concatenate(preds)
    if model.config.target == "normal":
        norm = np.linalg.norm(pred, axis=1, keepdims=True)
        fallback = np.zeros_like(pred)
        fallback[:, 2] = -1.0
        pred = np.where(norm > 1e-12, pred / np.where(norm > 1e-12, norm, 1.0), fallback)
    alpha = None if alphas[0] is None else np.concatenate(alphas)
    calls = model.denoise_calls - calls_before
    if squeeze:
        pred = pred[0]
        alpha = None if alpha is None else alpha[0]
    return Prediction(prediction=pred, alpha=alpha, denoiser_calls=calls)
