"""Dense tensor with a reverse-mode gradient tape.

Every op that receives at least one input with ``requires_grad`` records its
parents and a backward closure on the output.  ``backward`` walks that graph
once in reverse topological order and accumulates ``.grad`` on the leaves.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError, ShapeError

_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _as_float_array(data, dtype=None, copy=True) -> np.ndarray:
    arr = np.array(data, copy=copy) if copy else np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """An n-dimensional float array plus optional gradient.

    ``data`` is float64 by default; float32 is kept when passed in so that the
    training path stays in single precision.
    """

    __slots__ = ("data", "grad", "requires_grad", "id", "name", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None,
                 copy: bool = True):
        self.data = _as_float_array(data, dtype=dtype, copy=copy)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self.name = name
        self.op: Optional[str] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    # construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable,
                 op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.id = next(_ids)
        out.name = None
        out.op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, copy=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar; implementations live in ops.py ------------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def backward(self) -> dict:
        return backward(self)


def tensor_from(shape: Sequence[int], values: Iterable[float], requires_grad: bool = False,
                dtype=np.float64) -> Tensor:
    """Build a tensor from a flat row-major value list."""
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise ShapeError(f"dimensions must be >= 1, got {shape}")
    flat = np.array(list(values), dtype=dtype)
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ShapeError(f"shape {shape} needs {expected} values, got {flat.size}")
    return Tensor(flat.reshape(shape), requires_grad=requires_grad, copy=False)


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.id not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> dict:
    """Backpropagate from a single-element ``root``.

    Leaf gradients are accumulated into ``leaf.grad``; the returned map holds
    the gradient produced by this call, keyed by leaf ``id``.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a single-element root, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractError("root does not depend on any tensor that requires grad")
    grads = {root.id: np.ones_like(root.data)}
    leaf_grads = {}
    for node in reversed(_topological_order(root)):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node._backward is None:
            leaf_grads[node.id] = g
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"{node.op}: gradient shape {pg.shape} != input shape {parent.shape}")
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
    return leaf_grads
