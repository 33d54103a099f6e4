"""File formats: PFM images, 8-bit PNGs, JSON manifests and PFCK checkpoints."""

from __future__ import annotations

import hashlib
import json
import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, IntegrityError


def write_pfm(path, image):
    """Write a little-endian PFM (scale -1.0, rows bottom-up).

    ``image`` is ``(H, W)`` for a single-channel ``Pf`` file or ``(3, H, W)``
    (channel-major, as used throughout the package) for a ``PF`` file.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        tag, hwc = "Pf", image[:, :, None]
    elif image.ndim == 3 and image.shape[0] == 3:
        tag, hwc = "PF", np.moveaxis(image, 0, -1)
    else:
        raise DimensionError(f"PFM expects (H, W) or (3, H, W), got {image.shape}")
    height, width = hwc.shape[:2]
    data = np.ascontiguousarray(np.flipud(hwc), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"{tag}\n{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pfm(path):
    """Read a PFM file into float64, ``(H, W)`` or ``(3, H, W)``."""
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise IntegrityError(f"{path}: not a PFM file (tag {tag!r})")
        dims = fh.readline()
        match = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not match:
            raise IntegrityError(f"{path}: malformed PFM dimensions {dims!r}")
        width, height = int(match.group(1)), int(match.group(2))
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if tag == b"PF" else 1
        count = width * height * channels
        data = np.frombuffer(fh.read(4 * count), dtype=dtype)
    if data.size != count:
        raise IntegrityError(f"{path}: truncated PFM payload")
    img = np.flipud(data.reshape(height, width, channels)).astype(np.float64)
    if channels == 1:
        return img[:, :, 0]
    return np.moveaxis(img, -1, 0)


def to_uint8(x):
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, image):
    """Write an 8-bit PNG from values in [0, 1]; ``(3, H, W)`` RGB or ``(H, W)`` gray.

    Boolean arrays are written as 0/255 masks.
    """
    image = np.asarray(image)
    if image.dtype == bool:
        image = image.astype(np.float64)
    if image.ndim == 3:
        if image.shape[0] != 3:
            raise DimensionError(f"RGB PNG expects (3, H, W), got {image.shape}")
        pil = Image.fromarray(np.ascontiguousarray(np.moveaxis(to_uint8(image), 0, -1)), "RGB")
    elif image.ndim == 2:
        pil = Image.fromarray(to_uint8(image), "L")
    else:
        raise DimensionError(f"cannot write array of shape {image.shape} as PNG")
    pil.save(path, format="PNG", optimize=False)


def read_png(path):
    """Read a PNG as float64 in [0, 1]; RGB comes back channel-major."""
    with Image.open(path) as pil:
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.ndim == 3:
        return np.moveaxis(arr[:, :, :3], -1, 0)
    return arr


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- checkpoints -------------------------------------------------------------

CKPT_MAGIC = b"PFCK"
CKPT_VERSION = 1
_DTYPE_TAGS = {np.dtype("float64"): 0, np.dtype("float32"): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def save_checkpoint(path, arrays, meta=None):
    """Write named arrays in PFCK format plus a ``.json`` architecture sidecar.

    Layout: ``b"PFCK"``, u32 version, then per array: u32 name length, UTF-8
    name, u8 dtype tag (0 = f64, 1 = f32), u32 rank, u32 dims, raw LE data.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        for name, value in arrays.items():
            value = np.asarray(value)
            if value.dtype not in _DTYPE_TAGS:
                value = value.astype(np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BI", _DTYPE_TAGS[value.dtype], value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(np.ascontiguousarray(value, dtype=value.dtype.newbyteorder("<")).tobytes())
    if meta is not None:
        write_json(sidecar_path(path), meta)
    return path


def sidecar_path(path):
    path = Path(path)
    return path.with_suffix(".json")


def load_checkpoint(path):
    """Return ``(arrays, meta)``; ``meta`` is ``None`` without a sidecar."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise IntegrityError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CKPT_VERSION:
        raise IntegrityError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    arrays = {}
    try:
        while pos < len(raw):
            (nlen,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + nlen].decode("utf-8")
            pos += nlen
            tag, rank = struct.unpack_from("<BI", raw, pos)
            pos += 5
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            dtype = _TAG_DTYPES[tag].newbyteorder("<")
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if pos + nbytes > len(raw):
                raise IntegrityError(f"{path}: truncated data for {name!r}")
            arrays[name] = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=pos).reshape(dims).astype(dtype.newbyteorder("="))
            pos += nbytes
    except (struct.error, KeyError) as exc:
        raise IntegrityError(f"{path}: corrupt checkpoint ({exc})") from exc
    sidecar = sidecar_path(path)
    meta = read_json(sidecar) if sidecar.exists() else None
    return arrays, meta
