"""Adam with bias correction and per-group learning rates."""

from __future__ import annotations

import math

import numpy as np


class Adam:
    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        """``groups`` is a list of ``{"params": [...], "lr": float}`` dicts."""
        self.groups = [{"params": list(g["params"]), "lr": float(g["lr"])} for g in groups]
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}
        for g in self.groups:
            for p in g["params"]:
                self.m[id(p)] = np.zeros_like(p.value)
                self.v[id(p)] = np.zeros_like(p.value)

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for g in self.groups:
            lr = g["lr"]
            for p in g["params"]:
                m = self.m[id(p)]
                v = self.v[id(p)]
                m *= b1
                m += (1.0 - b1) * p.grad
                v *= b2
                v += (1.0 - b2) * p.grad * p.grad
                if lr:
                    p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(base_lr, step, total_steps, min_lr=0.0):
    """Cosine annealing from ``base_lr`` at step 0 to ``min_lr`` at ``total_steps``."""
    frac = min(max(step / max(total_steps, 1), 0.0), 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * frac))
