"""Joint denoiser / confidence-predictor training.

Two per-timestep weightings of the noise-prediction error are available.
``"eps"`` is the plain mean squared noise error. ``"v"`` divides it by
``alpha_bar_t``, which is the same as a mean squared error on the raw network
output against ``sqrt(1 - ab) * z0 - sqrt(ab) * eps``. Without that
reweighting the error at high noise levels carries almost no weight, and at
zero SNR none at all, so nothing forces the denoiser to read the condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from ..nn import Adam, cosine_lr
from ..nn.functional import mse_loss, mse_loss_backward
from .sampler import forward_noising

log = logging.getLogger(__name__)

WEIGHTINGS = ("v", "eps")


@dataclass(frozen=True)
class TrainConfig:
    # reference full-scale values: 20000 steps, batch 32, lr_unet 3e-5 (cosine), lr_confidence 1e-4
    steps: int = 2000
    batch: int = 8
    lr_unet: float = 3e-4
    lr_confidence: float = 1e-3
    cosine: bool = True
    seed: int = 0
    weighting: str = "v"

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"unknown loss weighting {self.weighting!r}; expected one of {WEIGHTINGS}")
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("steps and batch must be positive")
        if self.lr_unet < 0 or self.lr_confidence < 0:
            raise ConfigError("learning rates must be non-negative")


def make_optimizer(model, config: TrainConfig):
    groups = [{"params": model.unet.parameters(), "lr": config.lr_unet}]
    if model.predictor is not None:
        groups.append({"params": model.predictor.parameters(), "lr": config.lr_confidence})
    return Adam(groups)


def train_step(batch, model, optimizer, rng, weighting="v"):
    """One joint update. ``batch`` holds ``rgb``, ``pol`` and ``target`` arrays.

    Returns ``(loss, mean_alpha)``; ``mean_alpha`` is ``None`` without a gate.
    """
    z_f, alpha = model.condition(batch["rgb"], batch["pol"])
    z0 = model.codec.encode(batch["target"])
    t = rng.integers(0, model.schedule.T, size=z0.shape[0])
    eps = rng.standard_normal(z0.shape)
    z_t = forward_noising(z0, eps, t, model.schedule)

    model.zero_grad()
    if weighting == "v":
        a, b = model.skip_coefficients(t, z0.ndim)
        pred, target = model.unet.forward(z_t, t, z_f), a * z0 - b * eps
    else:
        pred, target = model.predict_noise(z_t, t, z_f), eps
    loss = mse_loss(pred, target)
    mean_alpha = None if alpha is None else float(alpha.mean())
    if not np.isfinite(loss):
        diag = {"t": t.tolist(), "loss": loss}
        if alpha is not None:
            diag.update(alpha_min=float(alpha.min()), alpha_max=float(alpha.max()), alpha_mean=mean_alpha)
        raise NumericalError("non-finite training loss", diag)
    grad = mse_loss_backward(pred, target)
    if weighting == "v":
        _, dz_f = model.unet.backward(grad)
    else:
        _, dz_f = model.denoise_backward(grad)
    model.fusion.backward(dz_f)
    optimizer.step()
    return loss, mean_alpha


def train(model, dataset, config: TrainConfig, target="depth", on_step=None):
    """Train for ``config.steps`` steps; ``on_step(record)`` receives each log record."""
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(model, config)
    targets = dataset.target(target)
    history = []
    for step in range(config.steps):
        lr = cosine_lr(config.lr_unet, step, config.steps) if config.cosine else config.lr_unet
        optimizer.groups[0]["lr"] = lr
        idx = rng.choice(len(dataset), size=config.batch, replace=len(dataset) < config.batch)
        batch = {"rgb": dataset.rgb[idx], "pol": dataset.pol[idx], "target": targets[idx]}
        loss, mean_alpha = train_step(batch, model, optimizer, rng, config.weighting)
        record = {"step": step + 1, "loss": loss, "mean_alpha": mean_alpha, "lr": lr}
        history.append(record)
        if on_step is not None:
            on_step(record)
    return history
