"""Loading generated datasets into normalised training arrays."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError
from .polar import PolarizationMap, encode_polarization


def normalize_depth(depth, lo_pct=2.0, hi_pct=98.0):
    """Affine map of the 2nd/98th depth percentiles onto [-1, 1], clipped."""
    lo, hi = np.percentile(depth, [lo_pct, hi_pct])
    if hi <= lo:
        return np.zeros_like(depth, dtype=np.float64)
    return np.clip(2.0 * (depth - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def load_manifest(path):
    """Read a manifest (file or containing directory) and check its files exist."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    manifest = io.read_json(path)
    root = path.parent
    for sample in manifest["samples"]:
        for rel in sample["files"].values():
            if not (root / rel).exists():
                raise FileNotFoundError(f"sample {sample['id']}: missing file {root / rel}")
    return manifest, root


def load_sample(sample_dir):
    """Raw arrays of one sample directory."""
    d = Path(sample_dir)
    aolp = io.read_pfm(d / "aolp.pfm")
    dolp = np.clip(io.read_pfm(d / "dolp.pfm"), 0.0, 1.0)
    pol = PolarizationMap(aolp=aolp, dolp=dolp, valid=dolp > 0)
    return {
        "rgb": io.read_png(d / "rgb.png"),
        "depth": io.read_pfm(d / "depth.pfm"),
        "normal": io.read_pfm(d / "normal.pfm"),
        "pol": pol,
        "mask": io.read_png(d / "mask.png") > 0.5,
    }


@dataclass
class Dataset:
    """Model-ready arrays: images in [-1, 1], NCHW."""

    ids: list
    rgb: np.ndarray
    pol: np.ndarray
    depth: np.ndarray
    depth_norm: np.ndarray
    normal: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.ids)

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(
            ids=[self.ids[i] for i in index],
            rgb=self.rgb[index],
            pol=self.pol[index],
            depth=self.depth[index],
            depth_norm=self.depth_norm[index],
            normal=self.normal[index],
            mask=self.mask[index],
        )

    def target(self, kind):
        if kind == "depth":
            return self.depth_norm
        if kind == "normal":
            return self.normal
        raise ConfigError(f"unknown target {kind!r}")


def load_dataset(manifest_path, ids=None):
    manifest, root = load_manifest(manifest_path)
    samples = manifest["samples"]
    if ids is not None:
        wanted = set(ids)
        samples = [s for s in samples if s["id"] in wanted]
    rgb, pol, depth, normal, mask = [], [], [], [], []
    for s in samples:
        raw = load_sample(root / s["id"])
        rgb.append(2.0 * raw["rgb"] - 1.0)
        pol.append(encode_polarization(raw["pol"]))
        depth.append(raw["depth"])
        normal.append(raw["normal"])
        mask.append(raw["mask"])
    depth = np.stack(depth)
    return Dataset(
        ids=[s["id"] for s in samples],
        rgb=np.stack(rgb),
        pol=np.stack(pol),
        depth=depth[:, None],
        depth_norm=np.stack([normalize_depth(d) for d in depth])[:, None],
        normal=np.stack(normal),
        mask=np.stack(mask),
    )


def split_ids(ids, test_count):
    """Deterministic split: the last ``test_count`` ids form the test set."""
    if not 0 < test_count < len(ids):
        raise ConfigError(f"test_count must lie in (0, {len(ids)}), got {test_count}")
    return list(ids[:-test_count]), list(ids[-test_count:])
