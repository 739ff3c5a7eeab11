"""Central-difference gradient checking in float64."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    n_checked: int
    skipped: list = field(default_factory=list)
    worst_index: tuple = ()

    def __bool__(self) -> bool:
        return self.passed


def _scalar(value: Tensor) -> float:
    if not isinstance(value, Tensor) or value.size != 1:
        shape = getattr(value, "shape", type(value).__name__)
        raise ContractError(f"grad_check function must return a single-element tensor, got {shape}")
    return float(value.data.reshape(-1)[0])


def grad_check(fn: Callable[[Tensor], Tensor], input: Tensor, step: float = 1e-6,
               tol: float = 1e-5, skip_kinks: bool = True, kink_tol: float = 1e-2) -> GradCheckReport:
    """Compare the backward pass of ``fn`` at ``input`` with central differences.

    ``input`` is perturbed in place (and restored), so ``fn`` may use it
    anywhere, e.g. as a layer parameter.  It must hold float64 data.

    A coordinate whose one-sided differences disagree by more than
    ``kink_tol`` (relative) straddles a non-differentiable point; it is
    reported in ``skipped`` rather than compared.  With ``skip_kinks=False``
    such coordinates are compared like any other.
    """
    if input.dtype != np.float64:
        raise ContractError("grad_check needs float64 input data")
    x = input.data
    was_requires, old_grad = input.requires_grad, input.grad

    input.requires_grad = True
    input.grad = None
    out = fn(input)
    _scalar(out)
    grads = backward(out) if out.requires_grad else {}
    analytic = grads.get(input.id, np.zeros_like(x))
    input.requires_grad, input.grad = was_requires, old_grad

    with no_grad():
        f0 = _scalar(fn(input))
        worst, worst_idx, checked, skipped = 0.0, (), 0, []
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + step
            f_plus = _scalar(fn(input))
            x[idx] = orig - step
            f_minus = _scalar(fn(input))
            x[idx] = orig
            if skip_kinks:
                fwd, bwd = (f_plus - f0) / step, (f0 - f_minus) / step
                if abs(fwd - bwd) > kink_tol * max(1.0, abs(fwd), abs(bwd)):
                    skipped.append(idx)
                    continue
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[idx])
            rel = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            checked += 1
            if rel > worst:
                worst, worst_idx = rel, idx
    return GradCheckReport(max_rel_err=worst, passed=worst < tol, n_checked=checked,
                           skipped=skipped, worst_index=worst_idx)
