"""Differentiable operations over Tensors.

Each op does a numpy forward pass and registers a closure that routes the
output gradient back to its parents. Broadcasting is restricted to the cases
the network actually uses (bias rows, scalar scales, row-wise weighting);
anything else is a shape error.
"""

from __future__ import annotations

import numpy as np

from sketchsql import kernels
from sketchsql.errors import BoundsError, ContractViolation, ShapeError
from sketchsql.autograd.tensor import Tensor, as_tensor, result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return result(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError("sub", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return result(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product; broadcasting follows numpy rules."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return result(out, (a, b), backward, "mul")


def scale(t, c: float) -> Tensor:
    t = as_tensor(t)
    c = float(c)

    def backward(g):
        if t.requires_grad:
            t.accumulate(g * c)

    return result(t.data * c, (t,), backward, "scale")


def matmul(a, b) -> Tensor:
    """Matrix/vector product with numpy matmul semantics for 1-D and 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim > 2 or b.ndim > 2:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        ad = a.data if a.ndim == 2 else a.data[None, :]
        bd = b.data if b.ndim == 2 else b.data[:, None]
        gm = g
        if a.ndim == 1 and b.ndim == 1:
            gm = np.asarray(g).reshape(1, 1)
        elif a.ndim == 1:
            gm = g[None, :]
        elif b.ndim == 1:
            gm = g[:, None]
        if a.requires_grad:
            a.accumulate((gm @ bd.T).reshape(a.data.shape))
        if b.requires_grad:
            b.accumulate((ad.T @ gm).reshape(b.data.shape))

    return result(out, (a, b), backward, "matmul")


def dot(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError("dot", a.shape, b.shape)
    return matmul(a, b)


def tanh(t) -> Tensor:
    t = as_tensor(t)
    out = np.tanh(t.data)

    def backward(g):
        if t.requires_grad:
            t.accumulate(g * (1.0 - out * out))

    return result(out, (t,), backward, "tanh")


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    x = t.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        if t.requires_grad:
            t.accumulate(g * out * (1.0 - out))

    return result(out, (t,), backward, "sigmoid")


def softmax(t, axis=-1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    t = as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if t.requires_grad:
            inner = (g * out).sum(axis=axis, keepdims=True)
            t.accumulate(out * (g - inner))

    return result(out, (t,), backward, "softmax")


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                t.accumulate(g[tuple(index)])
            offset += size

    return result(out, tuple(tensors), backward, "concat")


def stack_rows(vectors) -> Tensor:
    """Stack 1-D tensors of equal length into a matrix, one per row."""
    vectors = [as_tensor(v) for v in vectors]
    if not vectors:
        raise ContractViolation("stack_rows of zero vectors")
    for v in vectors:
        if v.ndim != 1:
            raise ShapeError("stack_rows", v.shape)
    out = np.stack([v.data for v in vectors], axis=0)

    def backward(g):
        for i, v in enumerate(vectors):
            if v.requires_grad:
                v.accumulate(g[i])

    return result(out, tuple(vectors), backward, "stack_rows")


def take_row(t, i: int) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeError("take_row", t.shape)
    if not 0 <= i < t.shape[0]:
        raise BoundsError(f"row {i} out of range for {t.shape[0]} rows")

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[i] = g
            t.accumulate(full)

    return result(t.data[i], (t,), backward, "take_row")


def slice_rows(t, start: int, stop: int) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeError("slice_rows", t.shape)
    if not (0 <= start < stop <= t.shape[0]):
        raise BoundsError(f"row slice [{start}:{stop}) out of range for {t.shape[0]} rows")

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[start:stop] = g
            t.accumulate(full)

    return result(t.data[start:stop], (t,), backward, "slice_rows")


def reverse_rows(t) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeError("reverse_rows", t.shape)

    def backward(g):
        if t.requires_grad:
            t.accumulate(g[::-1])

    return result(t.data[::-1], (t,), backward, "reverse_rows")


def broadcast_rows(v, n: int) -> Tensor:
    """Repeat a vector as n identical rows."""
    v = as_tensor(v)
    if v.ndim != 1:
        raise ShapeError("broadcast_rows", v.shape)
    out = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()

    def backward(g):
        if v.requires_grad:
            v.accumulate(g.sum(axis=0))

    return result(out, (v,), backward, "broadcast_rows")


def embed(table, ids) -> Tensor:
    """Gather rows of an embedding table; grads scatter-add back."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeError("embed", table.shape)
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ContractViolation("embed expects a flat id sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise BoundsError(f"embedding id out of range for table of {table.shape[0]} rows")

    def backward(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            table.accumulate(full)

    return result(table.data[idx], (table,), backward, "embed")


def mean(t, axis=None) -> Tensor:
    t = as_tensor(t)
    out = t.data.mean(axis=axis)
    count = t.data.size if axis is None else t.data.shape[axis]

    def backward(g):
        if t.requires_grad:
            if axis is None:
                t.accumulate(np.full_like(t.data, g / count))
            else:
                t.accumulate(np.expand_dims(np.asarray(g), axis).repeat(t.data.shape[axis], axis) / count)

    return result(out, (t,), backward, "mean")


def total(t, axis=None) -> Tensor:
    """Sum of entries (named to avoid shadowing builtins)."""
    t = as_tensor(t)
    out = t.data.sum(axis=axis)

    def backward(g):
        if t.requires_grad:
            if axis is None:
                t.accumulate(np.full_like(t.data, g))
            else:
                t.accumulate(np.expand_dims(np.asarray(g), axis).repeat(t.data.shape[axis], axis))

    return result(out, (t,), backward, "total")


def max_rows(t) -> Tensor:
    """Columnwise max over the rows of a matrix; grad flows to the argmax row."""
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeError("max_rows", t.shape)
    if t.shape[0] == 0:
        raise ContractViolation("max_rows over zero rows")
    winners = t.data.argmax(axis=0)
    out = t.data[winners, np.arange(t.shape[1])]

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[winners, np.arange(t.data.shape[1])] = g
            t.accumulate(full)

    return result(out, (t,), backward, "max_rows")


def power(t, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent.

    Fractional or negative exponents require strictly positive inputs.
    """
    t = as_tensor(t)
    exponent = float(exponent)
    if exponent != int(exponent) or exponent < 0:
        if np.any(t.data <= 0):
            raise NumericError(f"power({exponent}): non-positive base")
    out = t.data**exponent

    def backward(g):
        if t.requires_grad:
            t.accumulate(g * exponent * t.data ** (exponent - 1.0))

    return result(out, (t,), backward, "power")


def vec_max(t) -> Tensor:
    """Max of a vector as a scalar; grad flows to the first argmax entry."""
    t = as_tensor(t)
    if t.ndim != 1:
        raise ShapeError("vec_max", t.shape)
    if t.shape[0] == 0:
        raise ContractViolation("vec_max over zero entries")
    winner = int(t.data.argmax())
    out = t.data[winner]

    def backward(g):
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[winner] = g
            t.accumulate(full)

    return result(out, (t,), backward, "vec_max")


def add_n(tensors) -> Tensor:
    """Sum a list of same-shape tensors (loss accumulation)."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("add_n of zero tensors")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        if t.data.shape != out.shape:
            raise ShapeError("add_n", out.shape, t.data.shape)
        out += t.data

    def backward(g):
        for t in tensors:
            if t.requires_grad:
                t.accumulate(g)

    return result(out, tuple(tensors), backward, "add_n")


def cross_entropy(logits, target: int) -> Tensor:
    """Negative log softmax probability of `target` for a 1-D logit vector."""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError("cross_entropy", logits.shape)
    if not 0 <= target < logits.shape[0]:
        raise BoundsError(f"target {target} out of range for {logits.shape[0]} classes")
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    loss = lse - shifted[target]
    probs = np.exp(shifted - lse)

    def backward(g):
        if logits.requires_grad:
            d = probs.copy()
            d[target] -= 1.0
            logits.accumulate(g * d)

    return result(loss, (logits,), backward, "cross_entropy")


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy over independent logits (any shape, incl. scalar).

    Uses the softplus form max(x,0) - x*t + log1p(exp(-|x|)) for stability.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape not in (logits.data.shape, ()):
        raise ShapeError("bce_with_logits", logits.shape, t.shape)
    t = np.broadcast_to(t, logits.data.shape)
    x = logits.data
    loss = (np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))).mean()
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    n = max(x.size, 1)

    def backward(g):
        if logits.requires_grad:
            logits.accumulate(g * (sig - t) / n)

    return result(loss, (logits,), backward, "bce_with_logits")


def lstm_sequence(x, wx, wh, b) -> Tensor:
    """Run a unidirectional LSTM over a (T, input) sequence from zero states.

    Returns the (T, hidden) sequence of hidden states. The recurrence runs in
    the selected kernel backend; its saved cache drives the backward pass.
    """
    x, wx, wh, b = as_tensor(x), as_tensor(wx), as_tensor(wh), as_tensor(b)
    if x.ndim != 2 or wx.ndim != 2 or wh.ndim != 2 or b.ndim != 1:
        raise ShapeError("lstm_sequence", x.shape, wx.shape, wh.shape, b.shape)
    hidden = wh.shape[0]
    if wx.shape != (x.shape[1], 4 * hidden) or wh.shape[1] != 4 * hidden or b.shape[0] != 4 * hidden:
        raise ShapeError("lstm_sequence", x.shape, wx.shape, wh.shape, b.shape)
    h0 = np.zeros(hidden)
    c0 = np.zeros(hidden)
    h_seq, cache = kernels.lstm_forward(x.data, h0, c0, wx.data, wh.data, b.data)

    def backward(g):
        dx, _, _, dwx, dwh, db = kernels.lstm_backward(cache, g)
        if x.requires_grad:
            x.accumulate(dx)
        if wx.requires_grad:
            wx.accumulate(dwx)
        if wh.requires_grad:
            wh.accumulate(dwh)
        if b.requires_grad:
            b.accumulate(db)

    return result(h_seq, (x, wx, wh, b), backward, "lstm_sequence")
