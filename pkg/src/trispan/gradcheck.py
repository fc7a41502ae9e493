"""Finite-difference verification of tape gradients.

Central differences need float64 head-room, so `grad_check` refuses
32-bit inputs; run it under `precision(64)` and build the checked
function's tensors there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tape, Tensor, backward, no_grad
from .errors import ContractError


@dataclass
class GradCheckEntry:
    input_name: str
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def passed(self, tol):
        return self.max_rel_err < tol

    def worst(self):
        return max(self.entries, key=lambda e: e.max_rel_err, default=None)


def _rel_err(analytic, numeric):
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


def grad_check(f, inputs, eps=1e-5):
    """Compare analytic and central-difference gradients of a scalar function.

    `f` is a zero-argument callable returning a scalar Tensor computed from
    the tensors in `inputs` (a dict name -> Tensor, every entry float64 with
    requires_grad set). Mismatches are reported, never raised.
    """
    if not inputs:
        raise ContractError("grad_check needs at least one input tensor")
    for name, t in inputs.items():
        if not isinstance(t, Tensor):
            raise ContractError(f"input {name!r} is not a Tensor")
        if t.dtype != np.float64:
            raise ContractError(f"input {name!r} must be float64 for grad_check")
        if not t.requires_grad:
            raise ContractError(f"input {name!r} does not require grad")

    saved_grads = {name: t.grad for name, t in inputs.items()}
    for t in inputs.values():
        t.grad = None
    with Tape() as tape:
        out = f()
        if not isinstance(out, Tensor) or out.size != 1:
            raise ContractError("grad_check expects f to return a scalar Tensor")
        backward(out, tape)
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in inputs.items()
    }
    for name, t in inputs.items():
        t.grad = saved_grads[name]

    report = GradCheckReport()
    with no_grad():
        for name, t in inputs.items():
            flat = t.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(f().data)
                flat[i] = orig - eps
                f_minus = float(f().data)
                flat[i] = orig
                numeric[i] = (f_plus - f_minus) / (2.0 * eps)
            numeric = numeric.reshape(t.data.shape)
            rel = _rel_err(analytic[name], numeric)
            worst = np.unravel_index(int(rel.argmax()), rel.shape) if rel.size else ()
            report.entries.append(
                GradCheckEntry(
                    input_name=name,
                    max_rel_err=float(rel.max()) if rel.size else 0.0,
                    max_abs_err=float(np.abs(analytic[name] - numeric).max())
                    if rel.size
                    else 0.0,
                    worst_index=tuple(int(j) for j in worst),
                )
            )
    return report
