"""The full conditional model: codec, fusion branch and denoiser."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import io
from ..errors import ConfigError
from ..fusion import ConfidencePredictor, FusionBranch, FusionStrategy
from .codec import LatentCodec
from .schedule import build_schedule
from .unet import DenoiserNet

MODALITIES = ("full", "rgb", "pol")
TARGET_CHANNELS = {"depth": 1, "normal": 3}


@dataclass(frozen=True)
class ModelConfig:
    target: str = "depth"
    fusion: str = "confidence"
    modality: str = "full"  # "rgb" feeds RGB to both branches, "pol" feeds polarization to both
    codec_factor: int = 4
    widths: tuple = (32, 64, 64)
    hidden: int = 16
    temb_dim: int = 32
    timesteps: int = 1000
    beta_start: float = 8.5e-4
    beta_end: float = 1.2e-2
    zero_snr: bool = True
    snr_shift: float = 512.0  # SNR divisor; redundant codec latents make the nominal schedule too easy
    seed: int = 0

    def __post_init__(self):
        if self.target not in TARGET_CHANNELS:
            raise ConfigError(f"unknown target {self.target!r}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")
        FusionStrategy(self.fusion)
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


class PolarDiffusionModel:
    """Codec, fusion branch and denoiser sharing one noise schedule.

    The network output ``F`` is mapped to a noise prediction through an
    input skip, ``eps = sqrt(1 - ab) * z_t - sqrt(ab) * F``. Then
    ``x0 = sqrt(ab) * z_t + sqrt(1 - ab) * F`` stays defined at zero SNR,
    and a network that outputs zero already predicts the prior mean.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.schedule = build_schedule(
            config.timesteps, config.beta_start, config.beta_end, config.zero_snr, config.snr_shift
        )
        rng = np.random.default_rng(config.seed)
        self.codec = LatentCodec(config.codec_factor)
        cond_channels = self.codec.latent_channels(3)
        z_channels = self.codec.latent_channels(TARGET_CHANNELS[config.target])
        self.predictor = None
        if config.fusion == "confidence":
            self.predictor = ConfidencePredictor(cond_channels, config.hidden, rng=rng)
        self.unet = DenoiserNet(z_channels, cond_channels, config.widths, config.temb_dim, rng=rng)
        self.reset_fusion()
        self.denoise_calls = 0

    def reset_fusion(self, seed=None):
        """Recreate the fusion branch; ``seed`` re-keys random-fusion draws."""
        strategy = FusionStrategy(self.config.fusion, self.config.seed if seed is None else seed)
        self.fusion = FusionBranch(strategy, self.codec.encode, self.predictor)

    @property
    def z_channels(self):
        return self.unet.z_channels

    def parameters(self):
        params = list(self.unet.parameters())
        if self.predictor is not None:
            params += self.predictor.parameters()
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0

    def branch_inputs(self, rgb, pol):
        if self.config.modality == "rgb":
            return rgb, rgb
        if self.config.modality == "pol":
            return pol, pol
        return rgb, pol

    def condition(self, rgb, pol):
        """Fused conditioning latent ``(z_f, alpha)`` for image batches in [-1, 1]."""
        a, b = self.branch_inputs(rgb, pol)
        return self.fusion.forward(a, b)

    def skip_coefficients(self, t, ndim):
        """``(sqrt(1 - ab), sqrt(ab))`` broadcastable against an ``ndim`` batch."""
        ab = self.schedule.alpha_bar[np.asarray(t)].reshape((-1,) + (1,) * (ndim - 1))
        return np.sqrt(1.0 - ab), np.sqrt(ab)

    def predict_noise(self, z_t, t, z_f):
        """Noise prediction; caches what :meth:`denoise_backward` needs."""
        a, b = self.skip_coefficients(t, z_t.ndim)
        self._skip_cache = (a, b)
        return a * z_t - b * self.unet.forward(z_t, t, z_f)

    def denoise(self, z_t, t, z_f):
        """Counted :meth:`predict_noise`, for samplers."""
        self.denoise_calls += 1
        return self.predict_noise(z_t, t, z_f)

    def denoise_x0(self, z_t, t, z_f):
        """Clean-latent prediction; the only estimate available where ``alpha_bar = 0``."""
        self.denoise_calls += 1
        a, b = self.skip_coefficients(t, z_t.ndim)
        return b * z_t + a * self.unet.forward(z_t, t, z_f)

    def denoise_backward(self, deps):
        """Gradients ``(dz_t, dz_f)`` given the gradient w.r.t. the last noise prediction."""
        a, b = self._skip_cache
        dz_t, dz_f = self.unet.backward(-b * deps)
        return a * deps + dz_t, dz_f

    def arrays(self):
        return {p.name: p.value for p in self.parameters()}

    def save(self, path, extra=None):
        meta = {"architecture": asdict(self.config)}
        meta["architecture"]["widths"] = list(self.config.widths)
        if extra:
            meta.update(extra)
        io.save_checkpoint(path, self.arrays(), meta)
        return io.file_sha256(path)

    @classmethod
    def load(cls, path):
        arrays, meta = io.load_checkpoint(path)
        if meta is None or "architecture" not in meta:
            raise ConfigError(f"{path}: checkpoint sidecar with architecture is missing")
        model = cls(ModelConfig(**meta["architecture"]))
        for p in model.parameters():
            if p.name not in arrays:
                raise ConfigError(f"{path}: parameter {p.name!r} missing from checkpoint")
            p.value[...] = arrays[p.name]
        return model
