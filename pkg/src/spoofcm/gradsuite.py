"""Gradient-check suite over every differentiable building block.

Each case projects the block output onto fixed random weights to get a
scalar, then compares backward against central differences in float64.
Inputs are drawn away from the ReLU-family kink at zero.
"""

from __future__ import annotations

from typing import Callable, Iterator, Tuple

import numpy as np

from .activations import Activation, Mode, activation_init, ensemble
from .model.layers import AttentiveStatsPool, SEBlock
from .nn import BatchNorm2d
from .numerics import GradCheckReport, Tensor, grad_check, ops
from .training.loss import OcsParams, ocs_loss

F64 = np.float64


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 2.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _projected(fn: Callable[[], Tensor], weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    w = Tensor(weights)
    return lambda _t: ops.sum(fn() * w)


def cases(seed: int = 0) -> Iterator[Tuple[str, Callable[[Tensor], Tensor], Tensor]]:
    """Yield ``(name, fn, checked_tensor)`` triples."""
    rng = np.random.default_rng(seed)

    # activations at their published initial constants
    shape = (2, 3, 4, 5)
    for kind in ("relu", "leaky_relu", "elu", "prelu", "rrelu", "arelu"):
        act = Activation(activation_init(kind), channels=3, dtype=F64)
        x = Tensor(_away_from_zero(rng, shape))
        r = rng.standard_normal(shape)
        yield f"{kind}/x", _projected(lambda a=act, x=x: a(x, Mode.EVAL), r), x
        if kind == "prelu":
            yield "prelu/xi", _projected(lambda a=act, x=x: a(x), r), act.xi
        if kind == "arelu":
            yield "arelu/alpha", _projected(lambda a=act, x=x: a(x), r), act.alpha
            yield "arelu/beta", _projected(lambda a=act, x=x: a(x), r), act.beta
        if kind == "rrelu":
            # train mode with the same slopes on every evaluation
            fn = lambda a=act, x=x: a(x, Mode.TRAIN, np.random.default_rng(seed + 1))  # noqa: E731
            yield "rrelu-train/x", _projected(fn, r), x
    ens = Activation(ensemble("relu", "arelu", "prelu"), channels=3, dtype=F64)
    x = Tensor(_away_from_zero(rng, shape))
    yield "ensemble/x", _projected(lambda: ens(x), rng.standard_normal(shape)), x

    # conv2d
    x = Tensor(rng.standard_normal((2, 2, 6, 7)))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.5)
    b = Tensor(rng.standard_normal(3))
    conv = lambda: ops.conv2d(x, w, b, stride=(2, 1), pad=(1, 1))  # noqa: E731
    r = rng.standard_normal(conv().shape)
    for name, t in (("x", x), ("w", w), ("b", b)):
        yield f"conv2d/{name}", _projected(conv, r), t

    # batch norm (batch statistics)
    bn = BatchNorm2d(3, dtype=F64)
    bn.gamma.data = rng.uniform(0.5, 1.5, bn.gamma.shape)
    bn.beta.data = rng.standard_normal(bn.beta.shape)
    x = Tensor(rng.standard_normal((4, 3, 3, 4)))
    r = rng.standard_normal(x.shape)
    fn = lambda: ops.batch_norm(x, bn.gamma, bn.beta, axes=(0, 2, 3), eps=bn.eps)  # noqa: E731
    for name, t in (("x", x), ("gamma", bn.gamma), ("beta", bn.beta)):
        yield f"batch_norm/{name}", _projected(fn, r), t

    # squeeze-and-excitation
    se = SEBlock(8, 4, rng=rng, dtype=F64)
    x = Tensor(rng.standard_normal((2, 8, 3, 4)))
    r = rng.standard_normal(x.shape)
    yield "se_block/x", _projected(lambda: se(x), r), x
    yield "se_block/fc1.weight", _projected(lambda: se(x), r), se.fc1.weight

    # attentive statistics pooling
    pool = AttentiveStatsPool(6, 5, rng=rng, dtype=F64)
    x = Tensor(rng.standard_normal((2, 6, 7)))
    r = rng.standard_normal((2, 12))
    yield "attentive_pool/x", _projected(lambda: pool(x), r), x
    yield "attentive_pool/proj.weight", _projected(lambda: pool(x), r), pool.proj.weight

    # one-class softmax loss
    # cosines near the margins keep softplus out of saturation, where the
    # gradient is tiny relative to the loss and finite differences cancel
    p = OcsParams()
    w0 = Tensor(rng.standard_normal(8))
    labels = np.array([0, 1, 0, 1, 1, 0])
    w_hat = w0.data / np.linalg.norm(w0.data)
    rows = []
    for y in labels:
        c = (p.m0 if y == 0 else p.m1) + rng.uniform(-0.1, 0.1)
        v = rng.standard_normal(8)
        v -= (v @ w_hat) * w_hat
        v /= np.linalg.norm(v)
        rows.append(rng.uniform(0.5, 2.0) * (c * w_hat + np.sqrt(1 - c * c) * v))
    emb = Tensor(np.array(rows))
    p.w0 = w0
    yield "ocs_loss/embeddings", lambda _t: ocs_loss(emb, labels, p), emb
    yield "ocs_loss/w0", lambda _t: ocs_loss(emb, labels, p), w0


def run_suite(seed: int = 0, tol: float = 1e-5, step: float = 1e-6) -> list:
    """Return ``[(name, GradCheckReport), ...]`` for every case."""
    return [(name, grad_check(fn, t, step=step, tol=tol)) for name, fn, t in cases(seed)]


def format_report(name: str, rep: GradCheckReport) -> str:
    status = "PASS" if rep.passed else "FAIL"
    return (f"{status} {name:24s} max_rel_err={rep.max_rel_err:.2e} checked={rep.n_checked} "
            f"skipped={len(rep.skipped)}")
