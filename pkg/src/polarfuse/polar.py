"""Stokes calculus, AoLP/DoLP extraction and the 3-channel polarization encoding.

Angles are radians. AoLP is kept in the canonical half-open range ``[0, pi)``;
pixels where the angle is undefined (zero DoLP or too dark) carry ``aolp = 0``
and ``valid = False``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IntegrityError

#: polarizer angles of a four-image stack, in stack order
POLARIZER_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)

PHYS_EPS = 1e-9
UNIT_CIRCLE_TOL = 1e-6


def fold_angle(phi):
    """Map angles onto ``[0, pi)``."""
    out = np.mod(np.asarray(phi, dtype=np.float64), np.pi)
    # np.mod can round a tiny negative input up to exactly pi
    return np.where(out >= np.pi, 0.0, out)


def _as_image(x, name):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise IntegrityError(f"{name} contains non-finite values")
    return x


@dataclass(frozen=True)
class PolarizerStack:
    """Four co-registered intensity images behind polarizers at 0/45/90/135 deg."""

    i0: np.ndarray
    i45: np.ndarray
    i90: np.ndarray
    i135: np.ndarray

    def __post_init__(self):
        imgs = []
        for name in ("i0", "i45", "i90", "i135"):
            img = _as_image(getattr(self, name), name)
            if np.any(img < 0):
                raise IntegrityError(f"{name} has negative intensities")
            imgs.append(img)
        if len({img.shape for img in imgs}) != 1:
            raise DimensionError(
                "polarizer images differ in shape: " + ", ".join(str(i.shape) for i in imgs)
            )
        for name, img in zip(("i0", "i45", "i90", "i135"), imgs):
            object.__setattr__(self, name, img)

    @classmethod
    def from_array(cls, stack):
        stack = np.asarray(stack)
        if stack.shape[0] != 4:
            raise DimensionError(f"expected 4 stacked images, got shape {stack.shape}")
        return cls(*stack)

    def as_array(self):
        return np.stack([self.i0, self.i45, self.i90, self.i135])

    @property
    def shape(self):
        return self.i0.shape


@dataclass(frozen=True)
class StokesMap:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    clamped: int = 0  # pixels whose (s1, s2) was shrunk onto the DoLP <= 1 bound

    @property
    def shape(self):
        return np.shape(self.s0)


@dataclass(frozen=True)
class PolarizationMap:
    aolp: np.ndarray
    dolp: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        aolp = np.asarray(self.aolp, dtype=np.float64)
        dolp = np.asarray(self.dolp, dtype=np.float64)
        if aolp.shape != dolp.shape:
            raise DimensionError(f"aolp {aolp.shape} and dolp {dolp.shape} differ")
        if np.any(dolp < 0) or np.any(dolp > 1) or not np.all(np.isfinite(dolp)):
            raise IntegrityError("dolp must lie in [0, 1]")
        valid = self.valid
        if valid is None:
            valid = dolp > 0
        valid = np.broadcast_to(np.asarray(valid, dtype=bool), aolp.shape)
        aolp = np.where(valid, fold_angle(aolp), 0.0)
        object.__setattr__(self, "aolp", aolp)
        object.__setattr__(self, "dolp", dolp)
        object.__setattr__(self, "valid", valid.copy())

    @property
    def shape(self):
        return self.aolp.shape


def simulate_polarizer(i_un, pol: PolarizationMap, phi_pol):
    """Intensity transmitted through a linear polarizer at angle ``phi_pol``."""
    i_un = _as_image(i_un, "i_un")
    if i_un.shape != pol.shape:
        raise DimensionError(f"i_un {i_un.shape} does not match polarization map {pol.shape}")
    if np.any(i_un < 0):
        raise IntegrityError("i_un must be non-negative")
    if not np.isfinite(phi_pol):
        raise IntegrityError("phi_pol must be finite")
    out = i_un * (1.0 + pol.dolp * np.cos(2.0 * pol.aolp - 2.0 * phi_pol))
    # rho <= 1 guarantees non-negativity up to rounding
    return np.maximum(out, 0.0)


def simulate_stack(i_un, pol: PolarizationMap) -> PolarizerStack:
    return PolarizerStack(*(simulate_polarizer(i_un, pol, a) for a in POLARIZER_ANGLES))


def stokes_from_measurements(stack: PolarizerStack) -> StokesMap:
    s0 = (stack.i0 + stack.i45 + stack.i90 + stack.i135) / 4.0
    s1 = (stack.i0 - stack.i90) / 2.0
    s2 = (stack.i45 - stack.i135) / 2.0
    mag = np.hypot(s1, s2)
    over = mag > s0 + PHYS_EPS
    n_clamped = int(np.count_nonzero(over))
    if n_clamped:
        scale = np.where(over, s0 / np.where(over, mag, 1.0), 1.0)
        s1 = s1 * scale
        s2 = s2 * scale
    return StokesMap(s0, s1, s2, clamped=n_clamped)


def polarization_from_stokes(stokes: StokesMap, s0_min_rel=1e-6) -> PolarizationMap:
    """DoLP and AoLP from Stokes components.

    Pixels with ``s0`` below ``s0_min_rel * max(s0)`` or with ``s1 = s2 = 0`` are
    marked invalid and given ``aolp = 0``.
    """
    s0 = np.asarray(stokes.s0, dtype=np.float64)
    s1 = np.asarray(stokes.s1, dtype=np.float64)
    s2 = np.asarray(stokes.s2, dtype=np.float64)
    s0_max = float(s0.max()) if s0.size else 0.0
    bright = (s0 > 0) & (s0 >= s0_min_rel * s0_max)
    safe_s0 = np.where(bright, s0, 1.0)
    dolp = np.where(bright, np.hypot(s1, s2) / safe_s0, 0.0)
    dolp = np.clip(dolp, 0.0, 1.0)
    valid = bright & ((s1 != 0) | (s2 != 0))
    aolp = np.where(valid, fold_angle(0.5 * np.arctan2(s2, s1)), 0.0)
    return PolarizationMap(aolp=aolp, dolp=dolp, valid=valid)


def encode_polarization(pol: PolarizationMap):
    """Return the ``(3, H, W)`` array ``[2*dolp - 1, cos 2*aolp, sin 2*aolp]``."""
    phi = np.where(pol.valid, fold_angle(pol.aolp), 0.0)
    return np.stack([2.0 * pol.dolp - 1.0, np.cos(2.0 * phi), np.sin(2.0 * phi)])


def decode_polarization(enc, check=True) -> PolarizationMap:
    """Invert :func:`encode_polarization`.

    With ``check=True`` the angle pair must lie on the unit circle within
    1e-6; noise-injected encodings should be decoded with ``check=False``.
    """
    enc = np.asarray(enc, dtype=np.float64)
    if enc.ndim < 1 or enc.shape[0] != 3:
        raise DimensionError(f"encoded polarization must have 3 channels, got {enc.shape}")
    c0, c1, c2 = enc
    radius = np.hypot(c1, c2)
    if check and np.any(np.abs(radius - 1.0) > UNIT_CIRCLE_TOL):
        worst = float(np.max(np.abs(radius - 1.0)))
        raise IntegrityError(f"angle channels off the unit circle by up to {worst:.3g}")
    dolp = np.clip((c0 + 1.0) / 2.0, 0.0, 1.0)
    valid = radius > 0
    phi = np.where(valid, fold_angle(0.5 * np.arctan2(c2, c1)), 0.0)
    return PolarizationMap(aolp=phi, dolp=dolp, valid=valid)
