"""Polarization-guided latent diffusion for monocular depth and normals.

The top level re-exports the polarization core and the most used entry
points; the subpackages ``polarfuse.nn`` and ``polarfuse.diffusion`` hold
the numpy network toolkit and the diffusion engine.
"""

from .errors import ConfigError, DimensionError, IntegrityError, NumericalError, PolarfuseError
from .polar import (
    PolarizationMap,
    PolarizerStack,
    StokesMap,
    decode_polarization,
    encode_polarization,
    polarization_from_stokes,
    simulate_polarizer,
    simulate_stack,
    stokes_from_measurements,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "IntegrityError",
    "NumericalError",
    "PolarfuseError",
    "PolarizationMap",
    "PolarizerStack",
    "StokesMap",
    "decode_polarization",
    "encode_polarization",
    "polarization_from_stokes",
    "simulate_polarizer",
    "simulate_stack",
    "stokes_from_measurements",
]
