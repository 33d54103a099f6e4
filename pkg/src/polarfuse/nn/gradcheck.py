"""Central finite-difference verification of hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    errors: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance


def _rel_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def grad_check(module, inputs, tolerance=1e-4, h=1e-5, seed=0, max_entries=None):
    """Compare ``module.backward`` against central differences.

    ``module`` exposes ``forward(*inputs)``, ``backward(dout)`` (returning one
    gradient per input) and ``parameters()``. The scalar probed is
    ``sum(forward(*inputs) * R)`` for a fixed random ``R``. The error of each
    tensor is ``max|analytic - numeric| / max(|analytic|, |numeric|)``.
    ``max_entries`` caps the probed coordinates per tensor (random subset).
    """
    if not isinstance(inputs, tuple):
        inputs = (inputs,)
    inputs = tuple(np.array(x, dtype=np.float64) for x in inputs)
    rng = np.random.default_rng(seed)
    params = list(module.parameters()) if hasattr(module, "parameters") else []

    out = np.asarray(module.forward(*inputs), dtype=np.float64)
    weights = np.ones_like(out) if out.ndim == 0 else rng.standard_normal(out.shape)

    def probe():
        return float(np.sum(np.asarray(module.forward(*inputs)) * weights))

    for p in params:
        p.grad[...] = 0.0
    module.forward(*inputs)
    dins = module.backward(weights if out.ndim else np.float64(1.0))
    if not isinstance(dins, tuple):
        dins = (dins,)
    analytic = {f"input{i}": np.array(d, dtype=np.float64) for i, d in enumerate(dins)}
    for p in params:
        analytic[p.name] = p.grad.copy()

    targets = {f"input{i}": x for i, x in enumerate(inputs)}
    targets.update({p.name: p.value for p in params})

    errors = {}
    for name, arr in targets.items():
        if name not in analytic or arr.size == 0:
            continue
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = probe()
            flat[i] = orig - h
            fm = probe()
            flat[i] = orig
            numeric[k] = (fp - fm) / (2.0 * h)
        errors[name] = _rel_error(analytic[name].reshape(-1)[idx], numeric)
    worst = max(errors.values()) if errors else 0.0
    return GradCheckReport(max_rel_error=worst, tolerance=tolerance, errors=errors)
