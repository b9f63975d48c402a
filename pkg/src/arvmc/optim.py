"""Adam with bias correction and a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrainingError", "Adam", "cosine_lr"]


class TrainingError(RuntimeError):
    pass


def cosine_lr(step: int, total: int, lr: float, lr_min: float) -> float:
    """Cosine decay from ``lr`` at step 0 to ``lr_min`` at ``total``."""
    if total <= 1:
        return lr
    t = min(step, total) / total
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * t))


@dataclass
class Adam:
    """Adam over a flat parameter vector.

    ``lr_min`` and ``total_steps`` set the cosine schedule; with
    ``total_steps=0`` the rate stays at ``lr``. ``warmup_steps`` ramps the
    rate linearly from lr/warmup_steps over the first steps, which keeps the
    first sign-like Adam updates from knocking a pre-trained state off its
    fit. ``lr_scale`` optionally multiplies the rate per coordinate.
    """

    n_params: int
    lr: float = 1e-3
    lr_min: float = 1e-4
    total_steps: int = 0
    warmup_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    lr_scale: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)
        if self.m.shape != (self.n_params,) or self.v.shape != (self.n_params,):
            raise ValueError("moment shapes do not match the parameter count")

    def current_lr(self) -> float:
        lr = self.lr
        if self.total_steps:
            lr = cosine_lr(self.step_count, self.total_steps, self.lr, self.lr_min)
        if self.step_count < self.warmup_steps:
            lr *= (self.step_count + 1) / self.warmup_steps
        return lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return updated parameters; moments are advanced in place."""
        grad = np.asarray(grad, dtype=float)
        if grad.shape != params.shape or grad.shape != self.m.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameters {params.shape}")
        bad = ~np.isfinite(grad)
        if bad.any():
            idx = np.flatnonzero(bad)
            raise TrainingError(
                f"non-finite gradient in {idx.size} components (first at flat index {idx[0]}: {grad[idx[0]]})"
            )
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** t)
        vhat = self.v / (1 - self.beta2 ** t)
        update = mhat / (np.sqrt(vhat) + self.eps)
        if self.lr_scale is not None:
            update = update * self.lr_scale
        return params - lr * update
