"""Adam and the one-cycle learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


class StepOutOfRange(ValueError):
    """Schedule queried outside [0, total_steps]."""


class Adam:
    """Adam with bias correction; epsilon sits outside the square root.

    update = lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """

    def __init__(self, params: list[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class OneCycleSchedule:
    """Cosine one-cycle schedule over a fixed number of steps.

    Starts at max_lr / start_div, rises to max_lr at
    round(warmup_fraction * total_steps), then anneals to
    max_lr / final_div at total_steps; both phases are half cosines.
    Valid step indices are 0 .. total_steps inclusive.
    """

    max_lr: float
    total_steps: int
    warmup_fraction: float = 0.3
    start_div: float = 25.0
    final_div: float = 1e4

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")
        if self.max_lr <= 0.0:
            raise ValueError(f"max_lr must be positive, got {self.max_lr}")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError(
                f"warmup_fraction must lie in (0, 1), got {self.warmup_fraction}"
            )

    @property
    def peak_step(self) -> int:
        return int(round(self.warmup_fraction * self.total_steps))

    def lr(self, step: int) -> float:
        if not 0 <= step <= self.total_steps:
            raise StepOutOfRange(
                f"step {step} outside [0, {self.total_steps}]"
            )
        peak = self.peak_step
        initial = self.max_lr / self.start_div
        final = self.max_lr / self.final_div
        if step <= peak:
            if peak == 0:
                return self.max_lr
            frac = step / peak
            lo, hi = initial, self.max_lr
        else:
            frac = (step - peak) / (self.total_steps - peak)
            lo, hi = self.max_lr, final
        # half-cosine from lo at frac 0 to hi at frac 1
        return float(hi + (lo - hi) * (1.0 + np.cos(np.pi * frac)) / 2.0)
