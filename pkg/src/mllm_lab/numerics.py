"""Minimal float64 dense-array kernels.

Everything the token resampler and the toy policy need to run and be
verified: matmul, row softmax, layer norm, scaled dot-product attention,
and a central-difference gradient harness. All operations are pure
functions; no broadcasting, callers reshape explicitly.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np

from .errors import DimensionError, EvaluationError, InputError


class DenseArray:
    """Row-major float64 array with explicit shape metadata.

    The backing buffer is copied on construction and marked read-only,
    so instances can be shared freely across threads.
    """

    __slots__ = ("_array",)

    def __init__(self, values, shape: Sequence[int] | None = None):
        arr = np.array(values, dtype=np.float64, order="C")
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if math.prod(shape) != arr.size:
                raise DimensionError(
                    f"cannot view {arr.size} values as shape {shape}"
                )
            arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise EvaluationError("DenseArray values must be finite")
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "DenseArray":
        return cls(np.zeros(tuple(int(s) for s in shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values (read-only)."""
        return self._array.reshape(-1)

    def to_numpy(self) -> np.ndarray:
        """Shaped read-only view of the values."""
        return self._array

    def reshape(self, shape: Sequence[int]) -> "DenseArray":
        return DenseArray(self._array, shape=shape)

    def __repr__(self) -> str:
        return f"DenseArray(shape={self.shape})"


def _require_2d(name: str, x: DenseArray) -> np.ndarray:
    if x.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {x.shape}")
    return x.to_numpy()


def matmul(a: DenseArray, b: DenseArray) -> DenseArray:
    """Matrix product of a (m x k) and b (k x n)."""
    am = _require_2d("a", a)
    bm = _require_2d("b", b)
    if am.shape[1] != bm.shape[0]:
        raise DimensionError(
            f"inner dimensions disagree: {am.shape} x {bm.shape}"
        )
    return DenseArray(am @ bm)


def softmax_rows(x: DenseArray) -> DenseArray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    xm = _require_2d("x", x)
    shifted = xm - xm.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return DenseArray(e / e.sum(axis=1, keepdims=True))


def layer_norm(x: DenseArray, eps: float = 1e-12) -> DenseArray:
    """Normalize each row to zero mean and unit variance."""
    xm = _require_2d("x", x)
    mu = xm.mean(axis=1, keepdims=True)
    var = xm.var(axis=1, keepdims=True)
    return DenseArray((xm - mu) / np.sqrt(var + eps))


def attention(q: DenseArray, k: DenseArray, v: DenseArray) -> DenseArray:
    """Scaled dot-product attention: softmax(q k^T / sqrt(d)) v.

    q is (Q x d), k is (N x d), v is (N x d_v). Every output row is a
    convex combination of the rows of v.
    """
    qm = _require_2d("q", q)
    km = _require_2d("k", k)
    vm = _require_2d("v", v)
    if qm.shape[1] != km.shape[1]:
        raise DimensionError(
            f"query/key dims disagree: {qm.shape} vs {km.shape}"
        )
    if km.shape[0] != vm.shape[0]:
        raise DimensionError(
            f"key/value counts disagree: {km.shape} vs {vm.shape}"
        )
    d = qm.shape[1]
    if d < 1:
        raise DimensionError("head dimension must be >= 1")
    scores = DenseArray(qm @ km.T / math.sqrt(d))
    weights = softmax_rows(scores)
    return DenseArray(weights.to_numpy() @ vm)


def finite_diff_grad(
    f: Callable[[DenseArray], float],
    x: DenseArray,
    eps: float = 1e-5,
) -> DenseArray:
    """Central-difference gradient of a scalar function at x.

    Per element i: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). The
    default eps balances truncation against float64 round-off.
    """
    if eps <= 0:
        raise InputError("eps must be positive")
    flat = np.array(x.data, dtype=np.float64)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(DenseArray(flat, shape=x.shape)))
        flat[i] = orig - eps
        lo = float(f(DenseArray(flat, shape=x.shape)))
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise EvaluationError(
                f"non-finite function value near element {i}"
            )
        grad[i] = (hi - lo) / (2.0 * eps)
    return DenseArray(grad, shape=x.shape)
