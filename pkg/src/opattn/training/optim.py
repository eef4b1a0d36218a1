"""Adam with bias correction and the single-cycle cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import ParamStore


@dataclass(frozen=True)
class ScheduleConfig:
    """One cosine half-cycle from eta_max down to eta_min over total_steps."""
    total_steps: int
    eta_max: float = 1e-3
    eta_min: float = 0.0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.eta_min > self.eta_max:
            raise ValueError(f"eta_min ({self.eta_min}) must be <= eta_max ({self.eta_max})")


def cosine_lr(step: int, sched: ScheduleConfig) -> float:
    """eta(t) = eta_min + (eta_max - eta_min)(1 + cos(pi t / T)) / 2, t clamped to [0, T]."""
    t = min(max(step, 0), sched.total_steps)
    return float(sched.eta_min + 0.5 * (sched.eta_max - sched.eta_min) * (
        1.0 + np.cos(np.pi * t / sched.total_steps)))


class AdamState:
    """First/second moments for a fixed set of parameters plus a shared step count.

    beta2 defaults to 0.99 to match the training recipe this lab reproduces.
    """

    def __init__(self, store: ParamStore, names=None,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        for name in (store.names() if names is None else sorted(names)):
            p = store[name]
            self.m[name] = np.zeros_like(p.data)
            self.v[name] = np.zeros_like(p.data)

    def names(self) -> list[str]:
        return sorted(self.m)


def adam_step(store: ParamStore, state: AdamState, lr: float) -> None:
    """One update of every parameter tracked by ``state``.

    Every tracked parameter must have a populated gradient. lr=0 leaves the
    parameters unchanged while the moments still advance.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in state.names():
        p = store[name]
        g = p.grad
        if g is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
