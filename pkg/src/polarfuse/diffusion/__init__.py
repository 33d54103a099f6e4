"""Latent diffusion engine: schedules, codec, denoiser, training and sampling."""

from .codec import LatentCodec, decode_latent, encode_latent
from .inference import Prediction, infer, mode_timesteps
from .model import ModelConfig, PolarDiffusionModel
from .sampler import ddim_sample, forward_noising, predict_x0
from .schedule import NoiseSchedule, build_schedule, leading_timesteps, trailing_timesteps
from .training import TrainConfig, train, train_step
from .unet import DenoiserNet, timestep_embedding

__all__ = [
    "DenoiserNet",
    "LatentCodec",
    "ModelConfig",
    "NoiseSchedule",
    "PolarDiffusionModel",
    "Prediction",
    "TrainConfig",
    "build_schedule",
    "ddim_sample",
    "decode_latent",
    "encode_latent",
    "forward_noising",
    "infer",
    "leading_timesteps",
    "mode_timesteps",
    "predict_x0",
    "timestep_embedding",
    "train",
    "train_step",
    "trailing_timesteps",
]
