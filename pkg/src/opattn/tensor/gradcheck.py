"""Central finite-difference verification of analytic gradients.

A check never raises on mismatch; it returns a report so callers can decide.
Run in double precision: with step 1e-5 the truncation plus roundoff noise
sits around 1e-9 absolute, comfortably below the default 1e-4 tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Tape, Tensor


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    tol: float
    eps: float
    per_input: dict = field(default_factory=dict)   # label -> max rel err

    def __str__(self) -> str:
        worst = ", ".join(f"{k}={v:.3e}" for k, v in sorted(
            self.per_input.items(), key=lambda kv: -kv[1])[:5])
        status = "PASS" if self.passed else "FAIL"
        return f"gradcheck {status}: max_rel_err={self.max_rel_err:.3e} (tol {self.tol}); worst: {worst}"


def gradcheck(fn: Callable[[], Tensor], wrt: Sequence[Tensor] | dict,
              tol: float = 1e-4, eps: float = 1e-5, floor: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``fn()`` against central
    differences for every element of every tensor in ``wrt``.

    ``wrt`` is a sequence of tensors or a name->tensor mapping (names label the
    report). Relative error per element is |a - n| / max(|a| + |n|, floor);
    the floor keeps numerically-zero gradients from registering as spurious
    failures while leaving sign flips and scale errors detectable.
    """
    if isinstance(wrt, dict):
        labeled = list(wrt.items())
    else:
        labeled = [(str(i), t) for i, t in enumerate(wrt)]

    for _, t in labeled:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    analytic = {}
    for label, t in labeled:
        analytic[label] = np.zeros_like(t.data) if t.grad is None else np.array(t.grad, dtype=np.float64)

    per_input = {}
    for label, t in labeled:
        flat = t.data.reshape(-1)
        num = np.empty(flat.shape, dtype=np.float64)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fplus = fn().item()
            flat[idx] = orig - eps
            fminus = fn().item()
            flat[idx] = orig
            num[idx] = (fplus - fminus) / (2 * eps)
        a = analytic[label].reshape(-1)
        denom = np.maximum(np.abs(a) + np.abs(num), floor)
        per_input[label] = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0

    max_rel = max(per_input.values()) if per_input else 0.0
    return GradCheckReport(passed=max_rel <= tol, max_rel_err=max_rel,
                           tol=tol, eps=eps, per_input=per_input)
