"""Confidence-gated latent fusion and the baseline fusion strategies.

Latents are NCHW arrays. The confidence predictor sees the RGB and
polarization latents concatenated along channels and emits a single-channel
alpha map in (0, 1); alpha weights the polarization latent and ``1 - alpha``
the RGB latent, broadcast over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .nn import Conv2d, Module, ReLU, Sigmoid

STRATEGIES = ("confidence", "fixed", "random", "early")


class ConfidencePredictor(Module):
    """Two 3x3 convolutions with a ReLU between them and a sigmoid head."""

    def __init__(self, latent_channels, hidden=16, *, rng):
        self.latent_channels = latent_channels
        self.hidden = hidden
        self.conv1 = Conv2d(2 * latent_channels, hidden, 3, rng=rng, name="confidence.conv1")
        self.act = ReLU()
        self.conv2 = Conv2d(hidden, 1, 3, rng=rng, name="confidence.conv2")
        self.head = Sigmoid()

    def forward(self, z_rgb, z_pol):
        if z_rgb.shape != z_pol.shape:
            raise DimensionError(f"latent shapes differ: {z_rgb.shape} vs {z_pol.shape}")
        if z_rgb.shape[1] != self.latent_channels:
            raise DimensionError(
                f"predictor built for {self.latent_channels} latent channels, got {z_rgb.shape[1]}"
            )
        h = self.act(self.conv1(np.concatenate([z_rgb, z_pol], axis=1)))
        return self.head(self.conv2(h))

    def backward(self, dalpha):
        dh = self.conv1.backward(self.act.backward(self.conv2.backward(self.head.backward(dalpha))))
        c = self.latent_channels
        return dh[:, :c], dh[:, c:]


def predict_confidence(z_rgb, z_pol, model: ConfidencePredictor):
    return model.forward(z_rgb, z_pol)


def gated_fuse(z_rgb, z_pol, alpha):
    """``alpha * z_pol + (1 - alpha) * z_rgb`` with alpha broadcast over channels."""
    if z_rgb.shape != z_pol.shape:
        raise DimensionError(f"latent shapes differ: {z_rgb.shape} vs {z_pol.shape}")
    if alpha.ndim != z_rgb.ndim or alpha.shape[-2:] != z_rgb.shape[-2:] or alpha.shape[-3] != 1:
        raise DimensionError(f"alpha {alpha.shape} does not broadcast over latents {z_rgb.shape}")
    return alpha * z_pol + (1.0 - alpha) * z_rgb


def gated_fuse_backward(dz, z_rgb, z_pol, alpha):
    """Gradients w.r.t. ``(z_rgb, z_pol, alpha)``."""
    dalpha = np.sum(dz * (z_pol - z_rgb), axis=-3, keepdims=True)
    return dz * (1.0 - alpha), dz * alpha, dalpha


@dataclass(frozen=True)
class FusionStrategy:
    tag: str = "confidence"
    seed: int = 0  # used by "random" only

    def __post_init__(self):
        if self.tag not in STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {self.tag!r}; expected one of {STRATEGIES}")


class FusionBranch:
    """Forward/backward wrapper that produces the fused conditioning latent.

    ``encode`` maps an NCHW image batch to latents (the codec). For the
    ``random`` strategy alpha is re-drawn i.i.d. per pixel on every call from
    a generator seeded by the strategy.
    """

    def __init__(self, strategy: FusionStrategy, encode, predictor=None, rng=None):
        if strategy.tag == "confidence" and predictor is None:
            raise ConfigError("confidence fusion requires a ConfidencePredictor")
        self.strategy = strategy
        self.encode = encode
        self.predictor = predictor if strategy.tag == "confidence" else None
        self._rng = rng if rng is not None else np.random.default_rng(strategy.seed)
        self._cache = None

    def parameters(self):
        return self.predictor.parameters() if self.predictor is not None else []

    def forward(self, rgb, pol):
        """Return ``(z_f, alpha)``; alpha is ``None`` for early fusion."""
        tag = self.strategy.tag
        if tag == "early":
            self._cache = None
            return self.encode(rgb + pol), None
        z_rgb, z_pol = self.encode(rgb), self.encode(pol)
        shape = (z_rgb.shape[0], 1) + z_rgb.shape[2:]
        if tag == "confidence":
            alpha = self.predictor.forward(z_rgb, z_pol)
        elif tag == "fixed":
            alpha = np.full(shape, 0.5)
        else:
            alpha = self._rng.uniform(0.0, 1.0, size=shape)
        self._cache = (z_rgb, z_pol, alpha)
        return gated_fuse(z_rgb, z_pol, alpha), alpha

    def backward(self, dz_f):
        """Accumulate predictor gradients; image inputs get no gradient."""
        if self.predictor is None:
            return
        z_rgb, z_pol, alpha = self._cache
        _, _, dalpha = gated_fuse_backward(dz_f, z_rgb, z_pol, alpha)
        self.predictor.backward(dalpha)


def fuse_with_strategy(strategy: FusionStrategy, rgb, pol, encode, predictor=None, rng=None):
    """One-shot fusion of image batches (NCHW, values in [-1, 1]); returns ``(z_f, alpha)``.

    Pass a persistent ``rng`` to get fresh random-fusion draws across calls.
    """
    return FusionBranch(strategy, encode, predictor, rng=rng).forward(rgb, pol)
