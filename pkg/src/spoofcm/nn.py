"""Layer containers: parameter registration, conv/linear/batch-norm layers."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .numerics import Tensor, ops


class Module:
    """Base class; parameters and sub-modules are discovered from attributes.

    Registration order is attribute assignment order, so parameter naming is
    deterministic.  A module reachable through two attributes (shared
    activation parameters) is reported once, under its first name.
    """

    training = False

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> list:
        out, seen = [], set()
        for name, p in self._walk(prefix, "params", set()):
            if p.id not in seen:
                seen.add(p.id)
                out.append((name, p))
        return out

    def named_buffers(self, prefix: str = "") -> list:
        return list(self._walk(prefix, "buffers", set()))

    def _walk(self, prefix: str, kind: str, visited: set) -> Iterator:
        if id(self) in visited:
            return
        visited.add(id(self))
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                if kind == "params" and value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value._walk(name + ".", kind, visited)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{name}.{i}.", kind, visited)
        if kind == "buffers":
            for attr, arr in getattr(self, "_buffers", {}).items():
                yield f"{prefix}{attr}", (self, attr)

    def modules(self) -> Iterator["Module"]:
        seen = set()
        stack = [self]
        while stack:
            m = stack.pop()
            if id(m) in seen:
                continue
            seen.add(id(m))
            yield m
            for value in vars(m).values():
                if isinstance(value, Module):
                    stack.append(value)
                elif isinstance(value, (list, tuple)):
                    stack.extend(v for v in value if isinstance(v, Module))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def he_normal(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, stride=1, pad=0, bias: bool = True,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad = stride, pad
        self.weight = Tensor(he_normal(rng, (c_out, c_in, kh, kw), c_in * kh * kw, dtype),
                             requires_grad=True, copy=False)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True, copy=False) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Linear(Module):
    """``y = x @ W + b`` with ``W`` stored as ``in x out``."""

    def __init__(self, n_in: int, n_out: int, bias: bool = True,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32, gain: float = 1.0):
        rng = rng or np.random.default_rng(0)
        limit = gain * np.sqrt(6.0 / (n_in + n_out))
        self.weight = Tensor(rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype),
                             requires_grad=True, copy=False)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True, copy=False) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class BatchNorm2d(Module):
    """Per-channel batch normalization over ``N x C x H x W`` maps."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.eps, self.momentum = eps, momentum
        self.gamma = Tensor(np.ones((1, channels, 1, 1), dtype=dtype), requires_grad=True, copy=False)
        self.beta = Tensor(np.zeros((1, channels, 1, 1), dtype=dtype), requires_grad=True, copy=False)
        self._buffers = {
            "running_mean": np.zeros((1, channels, 1, 1), dtype=dtype),
            "running_var": np.ones((1, channels, 1, 1), dtype=dtype),
        }

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        axes = (0, 2, 3)
        if not train:
            return ops.batch_norm(x, self.gamma, self.beta, axes, self.eps,
                                  self._buffers["running_mean"], self._buffers["running_var"])
        out, mu, var = ops.batch_norm(x, self.gamma, self.beta, axes, self.eps, return_stats=True)
        count = x.size // x.shape[1]
        unbiased = var * (count / max(count - 1, 1))
        m = self.momentum
        rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
        self._buffers["running_mean"] = ((1 - m) * rm + m * mu).astype(rm.dtype)
        self._buffers["running_var"] = ((1 - m) * rv + m * unbiased).astype(rv.dtype)
        return out
