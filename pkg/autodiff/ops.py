"""Differentiable operations.

Every op accepts Tensors or array-likes (treated as constants) and records a node
only when at least one operand is tracked.
"""
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from autodiff.errors import IndexOutOfRangeError, ShapeMismatchError
from autodiff.tensor import BackwardFn, Tensor, constant


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _record(value: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    tape = next((p.tape for p in parents if p.tape is not None), None)
    if tape is None:
        return Tensor(value)
    return tape.record(value, parents, backward)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _check_index(index: np.ndarray, size: int, name: str) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= size):
        raise IndexOutOfRangeError(f"{name}: index out of range for {size} rows")
    return index


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sparse_matmul(matrix: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    x = _lift(x)
    if matrix.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"sparse_matmul: cannot multiply {matrix.shape} by {x.shape}")
    matrix = sp.csr_matrix(matrix)
    transposed = matrix.T.tocsr()
    return _record(np.asarray(matrix @ x.value), (x,), lambda g: (np.asarray(transposed @ g),))


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _record(
        av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def scale(a, factor: float) -> Tensor:
    a = _lift(a)
    return _record(a.value * factor, (a,), lambda g: (g * factor,))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError(f"concat: {exc}") from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _record(value, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def take_slice(a, key) -> Tensor:
    """Basic (non-fancy) indexing, e.g. take_slice(x, (slice(None), slice(0, 3)))."""
    a = _lift(a)
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape)
        grad[key] = g
        return (grad,)

    return _record(a.value[key], (a,), backward)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _lift(a)
    original = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeMismatchError(f"reshape: cannot view {original} as {shape}") from None
    return _record(value, (a,), lambda g: (g.reshape(original),))


def relu(a) -> Tensor:
    """max(x, 0); the subgradient at 0 is 0."""
    a = _lift(a)
    if a.tape is not None and a.value.size:
        a.tape.relu_margin = min(a.tape.relu_margin, float(np.min(np.abs(a.value))))
    mask = a.value > 0
    return _record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def softmax(a) -> Tensor:
    """Row-wise softmax of a 2-D tensor."""
    a = _lift(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    s = exp / exp.sum(axis=1, keepdims=True)
    return _record(s, (a,), lambda g: (s * (g - np.sum(g * s, axis=1, keepdims=True)),))


def segment_softmax(logits, segments: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a 1-D tensor within groups given by `segments`."""
    logits = _lift(logits)
    segments = _check_index(segments, n_segments, "segment_softmax")
    if segments.shape != logits.shape:
        raise ShapeMismatchError(f"segment_softmax: {segments.shape} segment ids for {logits.shape} logits")
    peak = np.full(n_segments, -np.inf)
    np.maximum.at(peak, segments, logits.value)
    exp = np.exp(logits.value - peak[segments])
    total = np.zeros(n_segments)
    np.add.at(total, segments, exp)
    s = exp / total[segments]

    def backward(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, segments, g * s)
        return (s * (g - dot[segments]),)

    return _record(s, (logits,), backward)


def mul_rows(a, weights) -> Tensor:
    """Scale row i of a 2-D tensor by weights[i]."""
    a, weights = _lift(a), _lift(weights)
    if weights.shape != (a.shape[0],):
        raise ShapeMismatchError(f"mul_rows: {weights.shape} weights for {a.shape[0]} rows")
    av, wv = a.value, weights.value
    return _record(
        av * wv[:, None], (a, weights), lambda g: (g * wv[:, None], np.sum(g * av, axis=1))
    )


def gather_rows(a, index: np.ndarray) -> Tensor:
    a = _lift(a)
    index = _check_index(index, a.shape[0], "gather_rows")
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape)
        np.add.at(grad, index, g)
        return (grad,)

    return _record(a.value[index], (a,), backward)


def scatter_sum(a, index: np.ndarray, n_rows: int) -> Tensor:
    """out[r] = sum of a[i] over i with index[i] == r."""
    a = _lift(a)
    index = _check_index(index, n_rows, "scatter_sum")
    if index.shape != (a.shape[0],):
        raise ShapeMismatchError(f"scatter_sum: {index.shape} indices for {a.shape[0]} rows")
    out = np.zeros((n_rows,) + a.shape[1:])
    np.add.at(out, index, a.value)
    return _record(out, (a,), lambda g: (g[index],))


def sum_(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    shape = a.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.asarray(a.value.sum(axis=axis)), (a,), backward)


def mean(a) -> Tensor:
    a = _lift(a)
    return scale(sum_(a), 1.0 / a.value.size)


def sqrt(a) -> Tensor:
    a = _lift(a)
    root = np.sqrt(a.value)
    safe = np.where(root > 0, root, 1.0)
    return _record(root, (a,), lambda g: (np.where(root > 0, 0.5 * g / safe, 0.0),))


def mse(pred, target) -> Tensor:
    """Mean squared error over all entries."""
    pred, target = _lift(pred), _lift(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.value - target.value
    n = diff.size
    return _record(
        np.asarray(np.mean(diff**2)), (pred, target), lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n)
    )


def rmse(pred, target) -> Tensor:
    return sqrt(mse(pred, target))
