"""Depth and surface-normal evaluation.

Depth predictions are affine-invariant and are fitted to ground truth by
least squares before scoring. Thresholds use strict ``<``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class AlignmentParams:
    scale: float
    shift: float
    degenerate: bool = False

    @property
    def negative_scale(self):
        return self.scale < 0


@dataclass(frozen=True)
class DepthMetrics:
    absrel: float
    delta1: float
    delta2: float
    n_pixels: int
    clamped: int = 0


@dataclass(frozen=True)
class NormalMetrics:
    mean: float
    median: float
    rmse: float
    acc_11_25: float
    acc_22_5: float
    acc_30: float
    n_pixels: int
    excluded: int = 0


def _mask_for(shape, mask):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise DimensionError(f"mask {mask.shape} does not match {shape}")
    return mask


def align_affine(pred, gt, mask=None):
    """Least-squares ``scale * pred + shift`` fit to ``gt`` over ``mask``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {pred.shape} and gt {gt.shape} differ")
    mask = _mask_for(pred.shape, mask)
    if not mask.any():
        raise ValueError("alignment mask is empty")
    p = pred[mask]
    g = gt[mask]
    p_mean = p.mean()
    g_mean = g.mean()
    var = np.mean((p - p_mean) ** 2)
    if var <= 1e-24 * max(1.0, p_mean * p_mean):
        params = AlignmentParams(0.0, float(g_mean), degenerate=True)
    else:
        scale = np.mean((p - p_mean) * (g - g_mean)) / var
        params = AlignmentParams(float(scale), float(g_mean - scale * p_mean))
    return params, params.scale * pred + params.shift


def depth_metrics(pred, gt, mask=None, d_min=1e-3):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {pred.shape} and gt {gt.shape} differ")
    mask = _mask_for(pred.shape, mask) & (gt > d_min)
    if not mask.any():
        raise ValueError("depth evaluation mask is empty")
    p = pred[mask]
    g = gt[mask]
    low = p <= d_min
    p = np.where(low, d_min, p)
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        absrel=float(np.mean(np.abs(p - g) / g)),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        n_pixels=int(p.size),
        clamped=int(np.count_nonzero(low)),
    )


def angular_error_deg(pred, gt):
    """Per-pixel angle in degrees between ``(3, ...)`` normal fields (renormalised)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    pn = np.linalg.norm(pred, axis=0)
    gn = np.linalg.norm(gt, axis=0)
    ok = (pn > 0) & (gn > 0)
    cos = np.sum(pred * gt, axis=0) / np.where(ok, pn * gn, 1.0)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))), ok


def normal_metrics(pred, gt, mask=None):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[0] != 3:
        raise DimensionError(f"normal fields must share a (3, ...) shape, got {pred.shape} and {gt.shape}")
    mask = _mask_for(pred.shape[1:], mask)
    err, ok = angular_error_deg(pred, gt)
    excluded = int(np.count_nonzero(mask & ~ok))
    sel = mask & ok
    if not sel.any():
        raise ValueError("normal evaluation mask is empty")
    e = np.sort(err[sel])
    return NormalMetrics(
        mean=float(e.mean()),
        median=float(e[(e.size - 1) // 2]),  # lower of the two middle values
        rmse=float(np.sqrt(np.mean(e * e))),
        acc_11_25=float(np.mean(e < 11.25)),
        acc_22_5=float(np.mean(e < 22.5)),
        acc_30=float(np.mean(e < 30.0)),
        n_pixels=int(e.size),
        excluded=excluded,
    )


def degradation(clean: DepthMetrics, noisy: DepthMetrics):
    """Per-metric loss going from clean to noisiest input; positive means worse."""
    return {
        "absrel": noisy.absrel - clean.absrel,
        "delta1": clean.delta1 - noisy.delta1,
        "delta2": clean.delta2 - noisy.delta2,
    }


def mean_depth_metrics(items):
    items = list(items)
    if not items:
        raise ValueError("no metrics to average")
    return DepthMetrics(
        absrel=float(np.mean([m.absrel for m in items])),
        delta1=float(np.mean([m.delta1 for m in items])),
        delta2=float(np.mean([m.delta2 for m in items])),
        n_pixels=int(sum(m.n_pixels for m in items)),
        clamped=int(sum(m.clamped for m in items)),
    )


def mean_normal_metrics(items):
    items = list(items)
    if not items:
        raise ValueError("no metrics to average")
    keys = ("mean", "median", "rmse", "acc_11_25", "acc_22_5", "acc_30")
    avg = {k: float(np.mean([getattr(m, k) for m in items])) for k in keys}
    return NormalMetrics(
        **avg,
        n_pixels=int(sum(m.n_pixels for m in items)),
        excluded=int(sum(m.excluded for m in items)),
    )


@dataclass
class MetricsReport:
    task: str
    n_samples: int
    absrel: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    normal: dict | None = None
    degradation: dict | None = None
    clamped_pixels: int = 0
    seed: int | None = None
    checkpoint_hash: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_depth(cls, m: DepthMetrics, n_samples, **kw):
        """Depth values are stored in percent, as in the result tables."""
        return cls(
            task="depth",
            n_samples=n_samples,
            absrel=100.0 * m.absrel,
            delta1=100.0 * m.delta1,
            delta2=100.0 * m.delta2,
            clamped_pixels=m.clamped,
            **kw,
        )

    @classmethod
    def from_normal(cls, m: NormalMetrics, n_samples, **kw):
        normal = {
            "mean": m.mean,
            "median": m.median,
            "rmse": m.rmse,
            "acc11_25": 100.0 * m.acc_11_25,
            "acc22_5": 100.0 * m.acc_22_5,
            "acc30": 100.0 * m.acc_30,
        }
        return cls(task="normal", n_samples=n_samples, normal=normal, **kw)

    def to_json(self):
        out = asdict(self)
        extra = out.pop("extra")
        if self.degradation is None:
            out.pop("degradation")
        out.update(extra)
        return out
