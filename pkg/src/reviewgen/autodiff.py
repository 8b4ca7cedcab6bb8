"""Minimal reverse-mode automatic differentiation over numpy arrays.

Primitives record themselves on the innermost active :class:`Tape`.  With no
tape active, operations only compute forward values, which are identical to
the recorded ones.

    w = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        loss = sum_(w)
        backward(loss)
    w.grad  # array([1., 1., 1.])
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels


class ContractViolation(ValueError):
    """Raised when an operation's preconditions are not met."""


# Probabilities are snapped to this grid so that every row of a softmax sums to
# exactly 1.0 in any summation order (all partial sums stay representable).
_MASS_QUANTUM = 2.0 ** -52


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "_tape", "_index", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.is_leaf = True
        self._tape: Tape | None = None
        self._index = -1
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        if self.requires_grad:
            if self.grad is None or self.grad.shape != self.data.shape:
                self.grad = np.zeros_like(self.data)
            else:
                self.grad.fill(0.0)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Entry:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple, backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


class Tape:
    """Ordered record of primitive applications; one per worker thread."""

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.entries)

    def reset(self) -> None:
        for e in self.entries:
            e.out._tape = None
        self.entries.clear()


def active_tape() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


class no_grad:
    """Suspend recording (e.g. for decoding)."""

    def __enter__(self):
        self._saved = list(_stack())
        _stack().clear()

    def __exit__(self, *exc):
        _stack().extend(self._saved)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad


def _record(data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is None or not any(_tracked(t) for t in inputs):
        return out
    out.requires_grad = True
    out.is_leaf = False
    out._tape = tape
    out._index = len(tape.entries)
    tape.entries.append(_Entry(out, inputs, backward))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf's ``grad``."""
    if loss.data.size != 1:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.is_leaf:
        if loss.requires_grad:
            loss.grad = loss.grad + 1.0
        return
    tape = loss._tape
    if tape is None or tape.entries[loss._index].out is not loss:
        raise ContractViolation("loss is not reachable from an active tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for k in range(loss._index, -1, -1):
        entry = tape.entries[k]
        g = grads.pop(id(entry.out), None)
        if g is None:
            continue
        for inp, gi in zip(entry.inputs, entry.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.is_leaf:
                _accumulate_leaf(inp, gi)
            else:
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else _dense(prev) + _dense(gi)


class _SparseRows:
    """Row-sparse gradient for table lookups: ``dense[ids] += rows``."""

    __slots__ = ("shape", "ids", "rows")

    def __init__(self, shape, ids, rows):
        self.shape = shape
        self.ids = ids
        self.rows = rows

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, self.ids, self.rows)
        return out


def _accumulate_leaf(t: Tensor, g) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    if isinstance(g, _SparseRows):
        np.add.at(t.grad, g.ids, g.rows)
    else:
        t.grad += g


def _dense(g):
    return g.dense() if isinstance(g, _SparseRows) else g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractViolation(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape

    def back(g):
        g = _dense(g)
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        g = _dense(g)
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(ad * bd, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, (a,), lambda g: (_dense(g) * c,))


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands (numpy ``@`` semantics)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ContractViolation(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        g = _dense(g)
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad

    return _record(ad @ bd, (a, b), back)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    ax = axis % parts[0].ndim
    for p in parts[1:]:
        if p.ndim != parts[0].ndim or any(
            p.shape[i] != parts[0].shape[i] for i in range(p.ndim) if i != ax
        ):
            raise ContractViolation(
                f"concat: incompatible shapes {parts[0].shape} and {p.shape}"
            )
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def back(g):
        return tuple(np.split(_dense(g), bounds, axis=ax))

    return _record(np.concatenate([p.data for p in parts], axis=ax), parts, back)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    for p in parts[1:]:
        if p.shape != parts[0].shape:
            raise ContractViolation(f"stack: incompatible shapes {parts[0].shape} and {p.shape}")

    def back(g):
        g = _dense(g)
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _record(np.stack([p.data for p in parts], axis=axis), parts, back)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ContractViolation(f"reshape: cannot view {src} as {shape}") from None
    return _record(out, (a,), lambda g: (_dense(g).reshape(src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    """Axis permutation (reverses all axes by default, like ``ndarray.T``)."""
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(_dense(g), inv),))


def index(a: Tensor, key) -> Tensor:
    """Basic numpy indexing (slices/ints) with scatter backward."""
    a = as_tensor(a)
    src = a.shape

    def back(g):
        out = np.zeros(src)
        out[key] = _dense(g)
        return (out,)

    return _record(a.data[key], (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _record(y, (a,), lambda g: (_dense(g) * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (_dense(g) * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_array(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Stable softmax over the last axis; masked entries get exactly zero mass.

    Each row is snapped to a 2**-52 grid with the residual assigned to its
    largest entry, so every row sums to exactly 1.0.
    """
    x = np.asarray(x, dtype=np.float64)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise ContractViolation("softmax: a row has no unmasked entries")
        x = np.where(mask, x, -np.inf)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    p = np.round(p / _MASS_QUANTUM) * _MASS_QUANTUM
    flat = p.reshape(-1, p.shape[-1])
    rows = np.arange(flat.shape[0])
    top = flat.argmax(axis=-1)
    flat[rows, top] += 1.0 - flat.sum(axis=-1)
    return flat.reshape(p.shape)


def log_softmax_array(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if mask is not None:
        x = np.where(np.broadcast_to(mask, x.shape), x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def softmax(a: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis. ``mask`` (bool, broadcastable) marks valid keys."""
    a = as_tensor(a)
    p = softmax_array(a.data, mask)

    def back(g):
        g = _dense(g)
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _record(p, (a,), back)


def log_softmax(a: Tensor, mask=None) -> Tensor:
    a = as_tensor(a)
    y = log_softmax_array(a.data, mask)
    p = np.exp(y)

    def back(g):
        g = np.where(np.isfinite(y), _dense(g), 0.0)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _record(y, (a,), back)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ContractViolation(
            f"embedding_lookup: id out of range [0, {n}) in ids of shape {ids.shape}"
        )
    shape = table.shape
    d = shape[1:]

    def back(g):
        return (_SparseRows(shape, ids.reshape(-1), _dense(g).reshape((-1,) + d)),)

    return _record(table.data[ids], (table,), back)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """-log softmax(logits)[target] over the last axis.

    ``target`` is an int (1-D logits) or an int array matching the leading
    axes; the result has the leading shape.
    """
    logits = as_tensor(logits)
    t = np.asarray(target, dtype=np.int64)
    V = logits.shape[-1]
    if t.shape != logits.shape[:-1]:
        raise ContractViolation(
            f"cross_entropy: target shape {t.shape} does not match logits {logits.shape}"
        )
    if t.size and (t.min() < 0 or t.max() >= V):
        raise ContractViolation(f"cross_entropy: target id out of range [0, {V})")
    ls = log_softmax_array(logits.data)
    picked = np.take_along_axis(ls, t[..., None], axis=-1)[..., 0]
    p = np.exp(ls)

    def back(g):
        g = _dense(g)[..., None]
        grad = p.copy()
        np.put_along_axis(grad, t[..., None], np.take_along_axis(grad, t[..., None], -1) - 1.0, -1)
        return (grad * g,)

    return _record(-picked, (logits,), back)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    src = a.shape

    def back(g):
        g = _dense(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# GRU


class GRUParams:
    """Gate weights for z=σ(W_z[x;h]+b_z), r=σ(W_r[x;h]+b_r), h̃=tanh(W_h[x;r⊙h]+b_h).

    Weight matrices are stored input-major, shape ``[d_in + d_h, d_h]``.
    """

    names = ("W_z", "W_r", "W_h", "b_z", "b_r", "b_h")

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator | None = None,
                 init_scale: float = 0.08):
        self.d_in, self.d_h = d_in, d_h

        def w():
            if rng is None:
                return np.zeros((d_in + d_h, d_h))
            return rng.uniform(-init_scale, init_scale, size=(d_in + d_h, d_h))

        self.W_z = Tensor(w(), requires_grad=True)
        self.W_r = Tensor(w(), requires_grad=True)
        self.W_h = Tensor(w(), requires_grad=True)
        self.b_z = Tensor(np.zeros(d_h), requires_grad=True)
        self.b_r = Tensor(np.zeros(d_h), requires_grad=True)
        self.b_h = Tensor(np.zeros(d_h), requires_grad=True)

    def tensors(self) -> dict:
        return {n: getattr(self, n) for n in self.names}


def gru_cell(x: Tensor, h: Tensor, params: GRUParams, mask=None) -> Tensor:
    """One GRU update, h′ = (1−z)⊙h + z⊙h̃, recorded as a single tape entry.

    ``x``/``h`` are ``[d]`` or batched ``[B, d]``.  Rows with ``mask == 0``
    keep their previous state unchanged.
    """
    x, h = as_tensor(x), as_tensor(h)
    vec = x.ndim == 1
    xd = np.ascontiguousarray(x.data.reshape(1, -1) if vec else x.data)
    hd = np.ascontiguousarray(h.data.reshape(1, -1) if h.ndim == 1 else h.data)
    d_in, d_h = params.d_in, params.d_h
    if xd.shape[1] != d_in or hd.shape[1] != d_h or xd.shape[0] != hd.shape[0]:
        raise ContractViolation(
            f"gru_cell: x {x.shape} / h {h.shape} do not fit d_in={d_in}, d_h={d_h}"
        )
    B = xd.shape[0]
    m = np.ones(B) if mask is None else np.ascontiguousarray(np.asarray(mask, dtype=np.float64).reshape(B))
    Wz, Wr, Wh = params.W_z.data, params.W_r.data, params.W_h.data
    xh = np.concatenate([xd, hd], axis=1)
    z = _sigmoid(xh @ Wz + params.b_z.data)
    r = _sigmoid(xh @ Wr + params.b_r.data)
    xrh = np.concatenate([xd, r * hd], axis=1)
    hc, out = kernels.gru_combine_forward(
        np.ascontiguousarray(z), hd, np.ascontiguousarray(xrh @ Wh + params.b_h.data), m
    )

    def back(g):
        g = np.ascontiguousarray(_dense(g).reshape(B, d_h))
        d_pre_z, d_pre_h, dh = kernels.gru_combine_backward(g, m, z, hd, hc)
        d_xrh = d_pre_h @ Wh.T
        d_pre_r, dh_r = kernels.gru_reset_backward(np.ascontiguousarray(d_xrh[:, d_in:]), hd, r)
        d_xh = d_pre_z @ Wz.T + d_pre_r @ Wr.T
        dx = d_xrh[:, :d_in] + d_xh[:, :d_in]
        dh = dh + dh_r + d_xh[:, d_in:]
        return (
            dx.reshape(x.shape),
            dh.reshape(h.shape),
            xh.T @ d_pre_z,
            xh.T @ d_pre_r,
            xrh.T @ d_pre_h,
            d_pre_z.sum(axis=0),
            d_pre_r.sum(axis=0),
            d_pre_h.sum(axis=0),
        )

    inputs = (x, h, params.W_z, params.W_r, params.W_h, params.b_z, params.b_r, params.b_h)
    return _record(out.reshape(-1) if h.ndim == 1 else out, inputs, back)



def gru_sequence(xs: Tensor, h0: Tensor, params: GRUParams, mask=None,
                 reverse: bool = False) -> Tensor:
    """Run :func:`gru_cell` over ``xs[T, B, d_in]`` as one tape entry.

    Returns the states ``[T, B, d_h]`` in input time order (``reverse`` scans
    from the last step).  Weight gradients are formed with one matmul per gate
    over all steps instead of one per step.
    """
    xs, h0 = as_tensor(xs), as_tensor(h0)
    if xs.ndim != 3 or h0.ndim != 2 or xs.shape[1] != h0.shape[0]:
        raise ContractViolation(f"gru_sequence: xs {xs.shape} / h0 {h0.shape} are not [T,B,d_in]/[B,d_h]")
    T, B, d_in = xs.shape
    d_h = params.d_h
    if d_in != params.d_in or h0.shape[1] != d_h:
        raise ContractViolation(
            f"gru_sequence: xs {xs.shape} / h0 {h0.shape} do not fit d_in={params.d_in}, d_h={d_h}"
        )
    m = np.ones((T, B)) if mask is None else np.ascontiguousarray(np.asarray(mask, dtype=np.float64).reshape(T, B))
    Wz, Wr, Wh = params.W_z.data, params.W_r.data, params.W_h.data
    Wz_x, Wz_h = Wz[:d_in], Wz[d_in:]
    Wr_x, Wr_h = Wr[:d_in], Wr[d_in:]
    Wh_x, Wh_h = Wh[:d_in], Wh[d_in:]
    X = xs.data
    Xz = X @ Wz_x + params.b_z.data
    Xr = X @ Wr_x + params.b_r.data
    Xh = X @ Wh_x + params.b_h.data
    H_prev = np.empty((T, B, d_h))
    Z = np.empty((T, B, d_h))
    R = np.empty((T, B, d_h))
    HC = np.empty((T, B, d_h))
    out = np.empty((T, B, d_h))
    order = range(T - 1, -1, -1) if reverse else range(T)
    h = np.ascontiguousarray(h0.data)
    for t in order:
        H_prev[t] = h
        z = _sigmoid(Xz[t] + h @ Wz_h)
        r = _sigmoid(Xr[t] + h @ Wr_h)
        hc, h = kernels.gru_combine_forward(z, h, np.ascontiguousarray(Xh[t] + (r * h) @ Wh_h), m[t])
        Z[t], R[t], HC[t], out[t] = z, r, hc, h

    def back(g):
        G = _dense(g)
        Dz = np.empty((T, B, d_h))
        Dr = np.empty((T, B, d_h))
        Dh = np.empty((T, B, d_h))
        dh_next = np.zeros((B, d_h))
        for t in reversed(order):
            gt = np.ascontiguousarray(G[t] + dh_next)
            d_pre_z, d_pre_h, dh = kernels.gru_combine_backward(gt, m[t], Z[t], H_prev[t], HC[t])
            d_pre_r, dh_r = kernels.gru_reset_backward(
                np.ascontiguousarray(d_pre_h @ Wh_h.T), H_prev[t], R[t]
            )
            dh_next = dh + dh_r + d_pre_z @ Wz_h.T + d_pre_r @ Wr_h.T
            Dz[t], Dr[t], Dh[t] = d_pre_z, d_pre_r, d_pre_h
        Xf = X.reshape(T * B, d_in)
        Hf = H_prev.reshape(T * B, d_h)
        RHf = (R * H_prev).reshape(T * B, d_h)
        Dzf, Drf, Dhf = Dz.reshape(-1, d_h), Dr.reshape(-1, d_h), Dh.reshape(-1, d_h)
        dX = Dz @ Wz_x.T + Dr @ Wr_x.T + Dh @ Wh_x.T
        return (
            dX,
            dh_next,
            np.concatenate([Xf.T @ Dzf, Hf.T @ Dzf]),
            np.concatenate([Xf.T @ Drf, Hf.T @ Drf]),
            np.concatenate([Xf.T @ Dhf, RHf.T @ Dhf]),
            Dzf.sum(axis=0),
            Drf.sum(axis=0),
            Dhf.sum(axis=0),
        )

    inputs = (xs, h0, params.W_z, params.W_r, params.W_h, params.b_z, params.b_r, params.b_h)
    return _record(out, inputs, back)
