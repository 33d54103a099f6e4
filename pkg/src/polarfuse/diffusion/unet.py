"""Toy U-Net noise predictor with hand-written backward.

Input is the noisy target latent concatenated with the fused conditioning
latent. Three resolutions (two down/up transitions), skip connections by
concatenation, and a sinusoidal timestep embedding projected and added at
each encoder level.
"""

from __future__ import annotations

import numpy as np

from ..nn import AvgPool2, Conv2d, Linear, Module, SiLU, UpsampleNearest2


def timestep_embedding(t, dim):
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class _Block(Module):
    """conv -> (+ time bias) -> SiLU -> conv -> SiLU."""

    def __init__(self, cin, cout, temb_dim, *, rng, name):
        self.conv_a = Conv2d(cin, cout, 3, rng=rng, name=f"{name}.conv_a")
        self.time = Linear(temb_dim, cout, rng=rng, name=f"{name}.time") if temb_dim else None
        self.act_a = SiLU()
        self.conv_b = Conv2d(cout, cout, 3, rng=rng, name=f"{name}.conv_b")
        self.act_b = SiLU()

    def forward(self, x, temb=None):
        h = self.conv_a(x)
        if self.time is not None:
            h = h + self.time(temb)[:, :, None, None]
        return self.act_b(self.conv_b(self.act_a(h)))

    def backward(self, dout):
        dh = self.act_a.backward(self.conv_b.backward(self.act_b.backward(dout)))
        if self.time is not None:
            self.time.backward(dh.sum(axis=(2, 3)))
        return self.conv_a.backward(dh)


class DenoiserNet(Module):
    def __init__(self, z_channels, cond_channels, widths=(32, 64, 64), temb_dim=32, *, rng):
        w0, w1, w2 = widths
        self.z_channels = z_channels
        self.cond_channels = cond_channels
        self.widths = tuple(widths)
        self.temb_dim = temb_dim
        self.enc0 = _Block(z_channels + cond_channels, w0, temb_dim, rng=rng, name="unet.enc0")
        self.pool0 = AvgPool2()
        self.enc1 = _Block(w0, w1, temb_dim, rng=rng, name="unet.enc1")
        self.pool1 = AvgPool2()
        self.mid = _Block(w1, w2, temb_dim, rng=rng, name="unet.mid")
        self.up1 = UpsampleNearest2()
        self.dec1 = Conv2d(w2 + w1, w1, 3, rng=rng, name="unet.dec1")
        self.act1 = SiLU()
        self.up0 = UpsampleNearest2()
        self.dec0 = Conv2d(w1 + w0, w0, 3, rng=rng, name="unet.dec0")
        self.act0 = SiLU()
        self.out = Conv2d(w0, z_channels, 3, rng=rng, name="unet.out")
        self.out.weight.value *= 0.1

    def forward(self, z_t, t, z_f):
        temb = timestep_embedding(t, self.temb_dim)
        if temb.shape[0] == 1 and z_t.shape[0] > 1:
            temb = np.repeat(temb, z_t.shape[0], axis=0)
        x = np.concatenate([z_t, z_f], axis=1)
        s0 = self.enc0(x, temb)
        s1 = self.enc1(self.pool0(s0), temb)
        m = self.mid(self.pool1(s1), temb)
        d1 = self.act1(self.dec1(np.concatenate([self.up1(m), s1], axis=1)))
        d0 = self.act0(self.dec0(np.concatenate([self.up0(d1), s0], axis=1)))
        return self.out(d0)

    def backward(self, dout):
        """Return gradients w.r.t. ``(z_t, z_f)``."""
        w0, w1, w2 = self.widths
        dcat0 = self.dec0.backward(self.act0.backward(self.out.backward(dout)))
        dd1 = self.up0.backward(dcat0[:, :w1])
        ds0 = dcat0[:, w1:]
        dcat1 = self.dec1.backward(self.act1.backward(dd1))
        dm = self.up1.backward(dcat1[:, :w2])
        ds1 = dcat1[:, w2:] + self.pool1.backward(self.mid.backward(dm))
        ds0 = ds0 + self.pool0.backward(self.enc1.backward(ds1))
        dx = self.enc0.backward(ds0)
        return dx[:, : self.z_channels], dx[:, self.z_channels :]
