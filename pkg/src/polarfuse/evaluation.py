"""Test-set evaluation and the noise-robustness protocol."""

from __future__ import annotations

import numpy as np

from . import metrics
from .diffusion.inference import infer
from .synth import inject_noise


def perturb_polarization(pol, beta, seed):
    """Noise-inject every encoded polarization image; sample ``i`` uses key ``(seed, i)``."""
    if beta == 0:
        return np.array(pol, dtype=np.float64, copy=True)
    return np.stack([inject_noise(p, beta, rng=np.random.default_rng([seed, i])) for i, p in enumerate(pol)])


def score_depth(pred, dataset, d_min=1e-3):
    """Align each prediction to its ground truth on the foreground mask and average per-image metrics."""
    per_image = []
    for p, gt, mask in zip(pred, dataset.depth, dataset.mask):
        mask = mask & (gt[0] > d_min)
        _, aligned = metrics.align_affine(p[0], gt[0], mask)
        per_image.append(metrics.depth_metrics(aligned, gt[0], mask, d_min=d_min))
    return metrics.mean_depth_metrics(per_image), per_image


def score_normals(pred, dataset):
    per_image = [metrics.normal_metrics(p, gt, m) for p, gt, m in zip(pred, dataset.normal, dataset.mask)]
    return metrics.mean_normal_metrics(per_image), per_image


def evaluate(model, dataset, mode="standard", seed=0, beta=0.0, noise_seed=0, d_min=1e-3):
    """Predict on ``dataset`` (optionally with noisy polarization) and score it."""
    pol = perturb_polarization(dataset.pol, beta, noise_seed)
    result = infer(model, dataset.rgb, pol, mode=mode, seed=seed)
    if model.config.target == "normal":
        summary, _ = score_normals(result.prediction, dataset)
    else:
        summary, _ = score_depth(result.prediction, dataset, d_min=d_min)
    return summary, result
