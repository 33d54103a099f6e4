"""Exactly invertible space-to-depth latent codec."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError


@dataclass(frozen=True)
class LatentCodec:
    factor: int = 4

    def latent_channels(self, channels):
        return channels * self.factor**2

    def encode(self, x):
        """``(N, C, H, W)`` or ``(C, H, W)`` -> ``(.., C*r*r, H/r, W/r)``."""
        x = np.asarray(x)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        n, c, h, w = x.shape
        r = self.factor
        if h % r or w % r:
            raise DimensionError(f"image {h}x{w} is not divisible by codec factor {r}")
        z = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h // r, w // r)
        return z[0] if squeeze else z

    def decode(self, z):
        z = np.asarray(z)
        squeeze = z.ndim == 3
        if squeeze:
            z = z[None]
        n, cz, hl, wl = z.shape
        r = self.factor
        if cz % (r * r):
            raise DimensionError(f"latent has {cz} channels, not a multiple of {r * r}")
        c = cz // (r * r)
        x = z.reshape(n, c, r, r, hl, wl).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, hl * r, wl * r)
        return x[0] if squeeze else x


def encode_latent(image, codec: LatentCodec):
    return codec.encode(image)


def decode_latent(latent, codec: LatentCodec):
    return codec.decode(latent)
