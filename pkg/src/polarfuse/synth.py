"""Procedural polarimetric scenes: ray-cast spheres and planes, Fresnel DoLP/AoLP.

Camera frame follows the OpenCV convention: x right, y down, z forward. The
pixel with integer coordinates ``(cx, cy)`` lies on the optical axis and
depth is z-depth. AoLP is the azimuth of the surface normal's image-plane
projection, measured in that frame, for diffuse reflection; specular
reflection rotates it by pi/2.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import io
from .errors import ConfigError, DimensionError
from .polar import (
    PolarizationMap,
    fold_angle,
    polarization_from_stokes,
    simulate_stack,
    stokes_from_measurements,
    PolarizerStack,
)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SAMPLE_FILES = {
    "rgb": "rgb.png",
    "depth": "depth.pfm",
    "normal": "normal.pfm",
    "aolp": "aolp.pfm",
    "dolp": "dolp.pfm",
    "mask": "mask.png",
}


# --- Fresnel polarization ----------------------------------------------------


def diffuse_dolp(theta, n):
    s2 = np.sin(theta) ** 2
    c = np.cos(theta)
    num = (n - 1.0 / n) ** 2 * s2
    den = 2.0 + 2.0 * n**2 - (n + 1.0 / n) ** 2 * s2 + 4.0 * c * np.sqrt(n**2 - s2)
    return num / den


def specular_dolp(theta, n):
    s2 = np.sin(theta) ** 2
    c = np.cos(theta)
    num = 2.0 * s2 * c * np.sqrt(n**2 - s2)
    den = n**2 - s2 - n**2 * s2 + 2.0 * s2**2
    return num / den


class FresnelPolarization(NamedTuple):
    dolp: np.ndarray
    aolp: np.ndarray
    grazing_clamped: int


def polarization_from_normal(normal, view, n=1.5, k_s=0.0):
    """DoLP/AoLP of light leaving a dielectric surface.

    ``normal`` and ``view`` (toward the camera) are ``(..., 3)`` unit vectors.
    DoLP blends the diffuse and specular curves by ``k_s``; AoLP follows
    the dominant branch (specular when ``k_s >= 0.5``).
    """
    normal = np.asarray(normal, dtype=np.float64)
    view = np.asarray(view, dtype=np.float64)
    if normal.shape[-1] != 3 or view.shape[-1] != 3:
        raise DimensionError("normal and view must have a trailing axis of length 3")
    cos_t = np.sum(normal * view, axis=-1)
    clamped = int(np.count_nonzero((cos_t < 0.0) | (cos_t > 1.0)))
    theta = np.arccos(np.clip(cos_t, 0.0, 1.0))
    k_s = np.asarray(k_s, dtype=np.float64)
    dolp = (1.0 - k_s) * diffuse_dolp(theta, n) + k_s * specular_dolp(theta, n)
    dolp = np.clip(dolp, 0.0, 1.0)
    phi_d = fold_angle(np.arctan2(normal[..., 1], normal[..., 0]))
    phi_s = fold_angle(phi_d + np.pi / 2)
    aolp = np.where(k_s >= 0.5, phi_s, phi_d)
    return FresnelPolarization(dolp=dolp, aolp=aolp, grazing_clamped=clamped)


# --- scene description -------------------------------------------------------


def _unit(v, name):
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ConfigError(f"{name} must be non-zero")
    return v / norm


@dataclass(frozen=True)
class Material:
    albedo: tuple = (0.7, 0.7, 0.7)
    specular: float = 0.0
    ior: float = 1.5
    shininess: float = 32.0

    def __post_init__(self):
        if not 1.0 < self.ior <= 3.0:
            raise ConfigError(f"refractive index must lie in (1, 3], got {self.ior}")
        if not 0.0 <= self.specular <= 1.0:
            raise ConfigError(f"specular weight must lie in [0, 1], got {self.specular}")
        if any(not 0.0 <= a <= 1.0 for a in self.albedo):
            raise ConfigError(f"albedo must lie in [0, 1]^3, got {self.albedo}")


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    material: Material = field(default_factory=Material)

    def intersect(self, dirs):
        c = np.asarray(self.center, dtype=np.float64)
        a = np.sum(dirs * dirs, axis=-1)
        b = -2.0 * dirs @ c
        cc = c @ c - self.radius**2
        disc = b * b - 4.0 * a * cc
        hit = disc >= 0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t_near = (-b - root) / (2.0 * a)
        t_far = (-b + root) / (2.0 * a)
        t = np.where(t_near > 0, t_near, t_far)
        return np.where(hit & (t > 0), t, np.inf)

    def normal_at(self, points):
        return (points - np.asarray(self.center)) / self.radius


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(float(x) for x in _unit(self.normal, "plane normal")))

    def intersect(self, dirs):
        nrm = np.asarray(self.normal)
        denom = dirs @ nrm
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (np.asarray(self.point) @ nrm) / denom
        return np.where((np.abs(denom) > 1e-12) & (t > 0), t, np.inf)

    def normal_at(self, points):
        return np.broadcast_to(np.asarray(self.normal), points.shape)


@dataclass(frozen=True)
class Scene:
    primitives: tuple = ()
    light_dir: tuple = (0.0, 0.0, -1.0)  # surface-to-light direction
    light_intensity: float = 1.0
    ambient: float = 0.1
    background_depth: float = 10.0
    background_rgb: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "light_dir", tuple(float(x) for x in _unit(self.light_dir, "light direction")))
        if self.background_depth <= 0:
            raise ConfigError("background depth must be positive")

    def to_params(self):
        prims = []
        for p in self.primitives:
            d = asdict(p)
            d["kind"] = type(p).__name__.lower()
            prims.append(d)
        return {
            "primitives": prims,
            "light_dir": list(self.light_dir),
            "light_intensity": self.light_intensity,
            "ambient": self.ambient,
            "background_depth": self.background_depth,
            "background_rgb": list(self.background_rgb),
        }

    @classmethod
    def from_params(cls, params):
        prims = []
        for d in params["primitives"]:
            d = dict(d)
            kind = d.pop("kind")
            m = d.pop("material")
            mat = Material(**{**m, "albedo": tuple(m["albedo"])})
            if kind == "sphere":
                prims.append(Sphere(center=tuple(d["center"]), radius=d["radius"], material=mat))
            elif kind == "plane":
                prims.append(Plane(point=tuple(d["point"]), normal=tuple(d["normal"]), material=mat))
            else:
                raise ConfigError(f"unknown primitive kind {kind!r}")
        return cls(
            primitives=prims,
            light_dir=tuple(params["light_dir"]),
            light_intensity=params["light_intensity"],
            ambient=params["ambient"],
            background_depth=params["background_depth"],
            background_rgb=tuple(params["background_rgb"]),
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")

    @classmethod
    def square(cls, size, focal=None):
        focal = float(size) if focal is None else float(focal)
        return cls(focal, focal, size / 2.0, size / 2.0, int(size), int(size))

    def ray_directions(self):
        """``(H, W, 3)`` directions with unit z component."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (3, H, W) in [0, 1]
    depth: np.ndarray  # (H, W)
    normal: np.ndarray  # (3, H, W)
    pol: PolarizationMap
    mask: np.ndarray  # (H, W) bool
    diagnostics: dict = field(default_factory=dict)


def sample_rng(seed, index, stream):
    """Counter-based generator keyed by ``(seed, sample index, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index), int(stream)])))


def render_scene(scene: Scene, cam: CameraIntrinsics, seed=0, pol_noise=0.0, index=0) -> RenderOutput:
    """Primary-ray render with Lambert + Blinn-Phong shading and Fresnel polarization.

    Polarization is measured the way a camera would: four polarizer images
    are synthesised from the clean DoLP/AoLP, perturbed by shot-like noise of
    standard deviation ``pol_noise * sqrt(I)`` and converted back through the
    Stokes vector. ``seed`` and ``index`` key that noise.
    """
    dirs = cam.ray_directions()
    h, w = cam.height, cam.width
    best_t = np.full((h, w), np.inf)
    best_id = np.full((h, w), -1, dtype=np.int64)
    for k, prim in enumerate(scene.primitives):
        t = prim.intersect(dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id = np.where(closer, k, best_id)
    mask = best_id >= 0

    depth = np.where(mask, best_t, scene.background_depth)
    points = dirs * np.where(mask, best_t, 0.0)[..., None]
    view = -dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)

    normal = np.zeros((h, w, 3))
    normal[..., 2] = -1.0
    albedo = np.zeros((h, w, 3)) + np.asarray(scene.background_rgb)
    spec_w = np.zeros((h, w))
    ior = np.full((h, w), 1.5)
    shin = np.ones((h, w))
    for k, prim in enumerate(scene.primitives):
        sel = best_id == k
        if not sel.any():
            continue
        nrm = prim.normal_at(points[sel])
        # planes may be seen from either side
        flip = np.sum(nrm * view[sel], axis=-1) < 0
        nrm = np.where(flip[:, None], -nrm, nrm)
        normal[sel] = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        albedo[sel] = prim.material.albedo
        spec_w[sel] = prim.material.specular
        ior[sel] = prim.material.ior
        shin[sel] = prim.material.shininess

    light = np.asarray(scene.light_dir)
    ndotl = np.clip(normal @ light, 0.0, None)
    half = light + view
    half /= np.linalg.norm(half, axis=-1, keepdims=True)
    ndoth = np.clip(np.sum(normal * half, axis=-1), 0.0, None)
    shade = albedo * (scene.ambient + scene.light_intensity * ndotl)[..., None]
    shade += (spec_w * scene.light_intensity * ndoth**shin)[..., None]
    rgb = np.where(mask[..., None], np.clip(shade, 0.0, 1.0), np.asarray(scene.background_rgb))

    fres = polarization_from_normal(normal, view, ior, spec_w)
    dolp = np.where(mask, fres.dolp, 0.0)
    clean = PolarizationMap(aolp=fres.aolp, dolp=dolp, valid=mask & (dolp > 0))
    intensity = rgb.mean(axis=-1)
    stack = simulate_stack(intensity, clean)
    if pol_noise > 0:
        rng = sample_rng(seed, index, 1)
        noisy = [
            np.clip(img + pol_noise * np.sqrt(img) * rng.standard_normal(img.shape), 0.0, None)
            for img in stack.as_array()
        ]
        stack = PolarizerStack(*noisy)
    stokes = stokes_from_measurements(stack)
    pol = polarization_from_stokes(stokes)

    return RenderOutput(
        rgb=np.moveaxis(rgb, -1, 0),
        depth=depth,
        normal=np.moveaxis(normal, -1, 0),
        pol=pol,
        mask=mask,
        diagnostics={
            "grazing_clamped": fres.grazing_clamped,
            "stokes_clamped": stokes.clamped,
        },
    )


# --- noise injection ---------------------------------------------------------


def inject_noise(enc, beta, seed=0, rng=None):
    """Add ``beta``-scaled standard normal noise and clip to [-1, 1].

    The angle pair leaves the unit circle afterwards; that is intended.
    """
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"noise intensity must be finite and >= 0, got {beta}")
    enc = np.asarray(enc, dtype=np.float64)
    if beta == 0:
        return enc.copy()
    if rng is None:
        rng = np.random.default_rng(seed)
    return np.clip(enc + beta * rng.standard_normal(enc.shape), -1.0, 1.0)


# --- random scenes and datasets ----------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    size: int = 64
    focal: float = 64.0
    spheres_min: int = 1
    spheres_max: int = 3
    radius_min: float = 0.3
    radius_max: float = 0.9
    sphere_depth_min: float = 2.0
    sphere_depth_max: float = 5.0
    wall: bool = True
    wall_depth_min: float = 5.5
    wall_depth_max: float = 8.0
    wall_tilt_max_deg: float = 50.0
    specular_min: float = 0.0
    specular_max: float = 1.0
    ior_min: float = 1.3
    ior_max: float = 1.8
    albedo_min: float = 0.15
    albedo_max: float = 0.9
    pol_noise: float = 0.02
    background_depth: float = 10.0


def _random_material(rng, cfg: SceneConfig):
    return Material(
        albedo=tuple(float(a) for a in rng.uniform(cfg.albedo_min, cfg.albedo_max, 3)),
        specular=float(rng.uniform(cfg.specular_min, cfg.specular_max)),
        ior=float(rng.uniform(cfg.ior_min, cfg.ior_max)),
        shininess=float(rng.choice([8.0, 16.0, 32.0, 64.0])),
    )


def random_scene(rng, cfg: SceneConfig) -> Scene:
    prims = []
    if cfg.wall:
        tilt = np.deg2rad(rng.uniform(0.0, cfg.wall_tilt_max_deg))
        azim = rng.uniform(0.0, 2.0 * np.pi)
        nrm = (np.sin(tilt) * np.cos(azim), np.sin(tilt) * np.sin(azim), -np.cos(tilt))
        dist = float(rng.uniform(cfg.wall_depth_min, cfg.wall_depth_max))
        prims.append(Plane(point=(0.0, 0.0, dist), normal=tuple(float(x) for x in nrm), material=_random_material(rng, cfg)))
    n_spheres = int(rng.integers(cfg.spheres_min, cfg.spheres_max + 1))
    half_fov = 0.5 * cfg.size / cfg.focal
    for _ in range(n_spheres):
        z = float(rng.uniform(cfg.sphere_depth_min, cfg.sphere_depth_max))
        x, y = (float(v) for v in rng.uniform(-0.7 * half_fov, 0.7 * half_fov, 2) * z)
        r = float(rng.uniform(cfg.radius_min, cfg.radius_max))
        prims.append(Sphere(center=(x, y, z), radius=r, material=_random_material(rng, cfg)))
    light = _unit((rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), -1.0), "light")
    return Scene(
        primitives=prims,
        light_dir=tuple(float(x) for x in light),
        light_intensity=float(rng.uniform(0.7, 1.0)),
        ambient=0.1,
        background_depth=cfg.background_depth,
    )


def write_sample(out: RenderOutput, sample_dir):
    sample_dir = Path(sample_dir)
    sample_dir.mkdir(parents=True, exist_ok=True)
    try:
        io.write_png(sample_dir / SAMPLE_FILES["rgb"], out.rgb)
        io.write_pfm(sample_dir / SAMPLE_FILES["depth"], out.depth)
        io.write_pfm(sample_dir / SAMPLE_FILES["normal"], out.normal)
        io.write_pfm(sample_dir / SAMPLE_FILES["aolp"], out.pol.aolp)
        io.write_pfm(sample_dir / SAMPLE_FILES["dolp"], out.pol.dolp)
        io.write_png(sample_dir / SAMPLE_FILES["mask"], out.mask)
    except OSError as exc:
        raise OSError(f"failed writing sample to {sample_dir}: {exc}") from exc


def make_dataset(cfg: SceneConfig, count, out_dir, seed=0):
    """Render ``count`` random scenes into ``out_dir`` and write ``manifest.json``."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cam = CameraIntrinsics.square(cfg.size, cfg.focal)
    samples = []
    for i in range(count):
        scene = random_scene(sample_rng(seed, i, 0), cfg)
        render = render_scene(scene, cam, seed=seed, pol_noise=cfg.pol_noise, index=i)
        sid = f"{i:06d}"
        write_sample(render, out_dir / sid)
        samples.append(
            {
                "id": sid,
                "files": {k: f"{sid}/{v}" for k, v in SAMPLE_FILES.items()},
                "scene_params": scene.to_params(),
            }
        )
        if render.diagnostics["stokes_clamped"]:
            log.debug("sample %s: %d Stokes pixels clamped", sid, render.diagnostics["stokes_clamped"])
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": int(seed),
        "generator": asdict(cfg),
        "camera": asdict(cam),
        "samples": samples,
    }
    io.write_json(out_dir / "manifest.json", manifest)
    return manifest
