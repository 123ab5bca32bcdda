"""Dense 2-D tensor kernels with reverse-mode gradients.

Everything computes in float64; 32-bit floats appear only at file
boundaries (see graph.write_features). A kernel is pure given its inputs:
passing a Tape records the operation for reverse accumulation, passing
tape=None runs the same arithmetic without bookkeeping (eval mode).
Concurrent forward passes must use separate tapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not match the kernel's contract."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed."""


def _check_finite(data: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {where}")


class Tensor:
    """A (rows, cols) float64 matrix; scalars are 1x1.

    requires_grad marks leaves the optimizer owns; outputs of kernels
    inherit it from their parents.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        _check_finite(arr, "Tensor()")
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Wengert list: ops appended in execution order, replayed in reverse.

    Reverse iteration order is a valid reverse topological order, so each
    recorded op is visited exactly once and sees the fully accumulated
    gradient of its output.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward) -> None:
        self._records.append(_Record(out, parents, backward))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(leaf) for every leaf reachable on this tape.

        Returns a dict keyed by tensor identity; intermediates are popped as
        they are consumed, so the result holds gradients for leaves only.
        """
        if loss.data.shape != (1, 1):
            raise ShapeError("backward() expects a scalar (1x1) loss")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones((1, 1))}
        for rec in reversed(self._records):
            g = grads.pop(rec.out, None)
            if g is None:
                continue
            for parent, pg in zip(rec.parents, rec.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(parent)
                grads[parent] = pg if acc is None else acc + pg
        return grads


def _result(data: np.ndarray, parents: Iterable[Tensor], where: str) -> Tensor:
    _check_finite(data, where)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = _result(a.data @ b.data, (a, b), "matmul")
    if tape is not None and out.requires_grad:
        def backward(g):
            ga = g @ b.data.T if a.requires_grad else None
            gb = a.data.T @ g if b.requires_grad else None
            return ga, gb
        tape.record(out, (a, b), backward)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.data.shape} + {b.data.shape}") from exc
    if data.shape != np.broadcast_shapes(a.data.shape, b.data.shape):
        raise ShapeError(f"add: {a.data.shape} + {b.data.shape}")
    out = _result(data, (a, b), "add")
    if tape is not None and out.requires_grad:
        def backward(g):
            ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
            gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
            return ga, gb
        tape.record(out, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise product with 2-D broadcasting (e.g. (n,1) against (n,m))."""
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.data.shape} * {b.data.shape}") from exc
    out = _result(data, (a, b), "mul")
    if tape is not None and out.requires_grad:
        def backward(g):
            ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
            gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
            return ga, gb
        tape.record(out, (a, b), backward)
    return out


def scale(x: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    out = _result(x.data * c, (x,), "scale")
    if tape is not None and out.requires_grad:
        tape.record(out, (x,), lambda g: (g * c,))
    return out


def affine(x: Tensor, w: Tensor, b: Tensor | None = None, tape: Tape | None = None) -> Tensor:
    """x @ w + b with b broadcast over rows; b=None skips the bias."""
    out = matmul(x, w, tape)
    if b is not None:
        if b.data.shape != (1, w.data.shape[1]):
            raise ShapeError(f"affine: bias {b.data.shape} for width {w.data.shape[1]}")
        out = add(out, b, tape)
    return out


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = _result(np.maximum(x.data, 0.0), (x,), "relu")
    if tape is not None and out.requires_grad:
        mask = x.data > 0.0  # subgradient 0 at 0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


def softmax_rows(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Row-wise softmax, shift-invariant via per-row max subtraction."""
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = _result(p, (x,), "softmax_rows")
    if tape is not None and out.requires_grad:
        def backward(g):
            dot = (p * g).sum(axis=1, keepdims=True)
            return (p * (g - dot),)
        tape.record(out, (x,), backward)
    return out


def softmax_vec(z: Tensor, tape: Tape | None = None) -> Tensor:
    if z.data.shape[0] != 1:
        raise ShapeError(f"softmax_vec expects a 1xk row, got {z.data.shape}")
    return softmax_rows(z, tape)


def segment_softmax(scores: Tensor, segment_ids: np.ndarray, num_segments: int,
                    tape: Tape | None = None) -> Tensor:
    """Softmax of a (n,1) score column within groups given by segment_ids.

    Rows sharing a segment id normalize against each other; empty segments
    simply have no rows. Used for per-node attention over incident edges.
    """
    if scores.data.shape[1] != 1:
        raise ShapeError(f"segment_softmax expects (n,1), got {scores.data.shape}")
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (scores.data.shape[0],):
        raise ShapeError("segment_softmax: one segment id per row required")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ShapeError("segment_softmax: segment id out of range")
    s = scores.data[:, 0]
    smax = np.full(num_segments, -np.inf)
    np.maximum.at(smax, seg, s)
    z = np.exp(s - smax[seg]) if seg.size else np.zeros(0)
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, z)
    p = (z / denom[seg]).reshape(-1, 1) if seg.size else np.zeros((0, 1))
    out = _result(p, (scores,), "segment_softmax")
    if tape is not None and out.requires_grad:
        def backward(g):
            gp = g[:, 0]
            dot = np.zeros(num_segments)
            np.add.at(dot, seg, p[:, 0] * gp)
            return ((p[:, 0] * (gp - dot[seg])).reshape(-1, 1),)
        tape.record(out, (scores,), backward)
    return out


def concat_cols(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"concat_cols: {a.data.shape} | {b.data.shape}")
    out = _result(np.concatenate([a.data, b.data], axis=1), (a, b), "concat_cols")
    if tape is not None and out.requires_grad:
        na = a.data.shape[1]
        def backward(g):
            ga = g[:, :na] if a.requires_grad else None
            gb = g[:, na:] if b.requires_grad else None
            return ga, gb
        tape.record(out, (a, b), backward)
    return out


def gather_rows(x: Tensor, idx, tape: Tape | None = None) -> Tensor:
    """Select rows of x by integer index; repeated indices allowed."""
    ind = np.asarray(idx, dtype=np.int64).reshape(-1)
    if ind.size and (ind.min() < 0 or ind.max() >= x.data.shape[0]):
        raise ShapeError("gather_rows: index out of range")
    out = _result(x.data[ind], (x,), "gather_rows")
    if tape is not None and out.requires_grad:
        def backward(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, ind, g)
            return (gx,)
        tape.record(out, (x,), backward)
    return out


def row_dot(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Per-row inner product: (n,m),(n,m) -> (n,1)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"row_dot: {a.data.shape} vs {b.data.shape}")
    out = _result((a.data * b.data).sum(axis=1, keepdims=True), (a, b), "row_dot")
    if tape is not None and out.requires_grad:
        def backward(g):
            ga = g * b.data if a.requires_grad else None
            gb = g * a.data if b.requires_grad else None
            return ga, gb
        tape.record(out, (a, b), backward)
    return out


def mean_scalars(xs: list[Tensor], tape: Tape | None = None) -> Tensor:
    """Mean of 1x1 tensors as a single recorded op."""
    if not xs:
        raise ShapeError("mean_scalars needs at least one value")
    for x in xs:
        if x.data.shape != (1, 1):
            raise ShapeError("mean_scalars expects 1x1 tensors")
    data = np.array([[sum(float(x.data[0, 0]) for x in xs) / len(xs)]])
    out = _result(data, xs, "mean_scalars")
    if tape is not None and out.requires_grad:
        n = len(xs)
        def backward(g):
            return tuple(g / n if x.requires_grad else None for x in xs)
        tape.record(out, tuple(xs), backward)
    return out


def sum_scalars(xs: list[Tensor], tape: Tape | None = None) -> Tensor:
    if not xs:
        raise ShapeError("sum_scalars needs at least one value")
    for x in xs:
        if x.data.shape != (1, 1):
            raise ShapeError("sum_scalars expects 1x1 tensors")
    data = np.array([[sum(float(x.data[0, 0]) for x in xs)]])
    out = _result(data, xs, "sum_scalars")
    if tape is not None and out.requires_grad:
        def backward(g):
            return tuple(g.copy() if x.requires_grad else None for x in xs)
        tape.record(out, tuple(xs), backward)
    return out


def dropout(x: Tensor, p: float, seed: int, training: bool,
            tape: Tape | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity when training is False or p == 0. The mask is a pure function
    of (seed, shape).
    """
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        out = _result(x.data.copy(), (x,), "dropout")
        if tape is not None and out.requires_grad:
            tape.record(out, (x,), lambda g: (g,))
        return out
    rng = np.random.default_rng(seed)
    mask = rng.random(x.data.shape) >= p
    inv = 1.0 / (1.0 - p)
    out = _result(x.data * mask * inv, (x,), "dropout")
    if tape is not None and out.requires_grad:
        tape.record(out, (x,), lambda g: (g * mask * inv,))
    return out


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamWState:
    """Decoupled-weight-decay Adam moments, keyed by parameter name."""

    lr: float
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
               state: AdamWState) -> tuple[Mapping[str, Tensor], AdamWState]:
    """One AdamW update in place: bias-corrected moments, then
    theta <- theta - lr*mhat/(sqrt(vhat)+eps) - lr*wd*theta.

    A parameter absent from grads gets a zero gradient (decay still applies).
    Any non-finite gradient aborts the whole step before touching state.
    """
    resolved = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.data.shape} for '{name}'")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for '{name}', step aborted")
        resolved[name] = g

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = resolved[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        mhat = m / bc1
        vhat = v / bc2
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps) \
            - state.lr * state.weight_decay * p.data
        _check_finite(p.data, f"adamw_step('{name}')")
    return params, state


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    n_skipped: int


def grad_check(loss_fn, params: Mapping[str, Tensor], h: float = 1e-5,
               coords_per_tensor: int | None = None, seed: int = 0,
               kink_tol: float = 1e-3) -> GradCheckReport:
    """Compare tape gradients of loss_fn against central finite differences.

    loss_fn(params, tape) must return a 1x1 Tensor and be deterministic for
    fixed params. Relative error uses denominator max(|a|,|n|,1e-8).

    Kink exclusion: a coordinate is skipped when the one-sided difference
    quotients (f(x+h)-f(x))/h and (f(x)-f(x-h))/h disagree beyond
    kink_tol * max(|left|, |right|, 1). For smooth f they differ by O(h*f''),
    while a ReLU flip inside the stencil leaves a slope jump. The rule looks
    only at the numeric side, so it cannot mask a wrong analytic gradient.
    """
    tape = Tape()
    loss = loss_fn(params, tape)
    if loss.data.shape != (1, 1):
        raise ShapeError("grad_check: loss_fn must return a 1x1 tensor")
    analytic = tape.backward(loss)
    rng = np.random.default_rng(seed)

    def feval() -> float:
        return float(loss_fn(params, None).data[0, 0])

    f0 = feval()
    max_rel = 0.0
    checked = 0
    skipped = 0
    for name in sorted(params):
        p = params[name]
        if not p.requires_grad:
            continue
        ag = analytic.get(p)
        if ag is None:
            ag = np.zeros_like(p.data)
        total = p.data.size
        if coords_per_tensor is None or coords_per_tensor >= total:
            flat = np.arange(total)
        else:
            flat = rng.choice(total, size=coords_per_tensor, replace=False)
        for k in flat:
            i, j = divmod(int(k), p.data.shape[1])
            orig = p.data[i, j]
            p.data[i, j] = orig + h
            fp = feval()
            p.data[i, j] = orig - h
            fm = feval()
            p.data[i, j] = orig
            d_right = (fp - f0) / h
            d_left = (f0 - fm) / h
            if abs(d_right - d_left) > kink_tol * max(abs(d_right), abs(d_left), 1.0):
                skipped += 1
                continue
            numeric = (fp - fm) / (2.0 * h)
            a = float(ag[i, j])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
            checked += 1
    return GradCheckReport(max_rel_err=max_rel, n_checked=checked, n_skipped=skipped)


def log_sum_exp(z: np.ndarray) -> float:
    m = float(np.max(z))
    return m + math.log(float(np.exp(z - m).sum()))
