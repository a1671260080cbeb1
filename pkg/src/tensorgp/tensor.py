"""Dense k-mode tensors and the mode-n (Tucker) product.

Conventions
-----------
Storage is row-major (C order): the last index runs fastest. ``vec`` uses
the same order, so for a tensor of shape ``(m1, ..., mk)``

    vec(t ×_n A) = (I_{m1} ⊗ ... ⊗ A ⊗ ... ⊗ I_{mk}) vec(t)

with ``A`` in the n-th Kronecker slot, and a tensor-normal variable with
mode covariances ``S1, ..., Sk`` has ``cov(vec(t)) = S1 ⊗ S2 ⊗ ... ⊗ Sk``.

Mode indices are 1-based at the public API.
"""
from dataclasses import dataclass
from functools import reduce
import operator

import numpy as np

from .exceptions import TensorShapeError


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Immutable real tensor with at least one mode.

    Parameters
    ----------
    data : array_like
        Values; copied into a read-only float64 C-ordered array.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(m < 1 for m in arr.shape):
            raise TensorShapeError(f"every mode size must be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_values(cls, shape, values):
        """Build from a shape and a flat row-major value sequence."""
        shape = tuple(int(m) for m in shape)
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != _prod(shape):
            raise TensorShapeError(
                f"{values.size} values do not fill shape {shape} (need {_prod(shape)})"
            )
        return cls(values.reshape(shape))

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """Flat row-major view of the entries."""
        return self.data.reshape(-1)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


def _prod(shape):
    return reduce(operator.mul, shape, 1)


def _as_array(t):
    return t.data if isinstance(t, DenseTensor) else np.asarray(t, dtype=np.float64)


def _check_mode(n, ndim):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= ndim:
        raise TensorShapeError(f"mode index {n} out of range 1..{ndim}")
    return int(n) - 1


def unfold(t, n):
    """Mode-n matricization.

    Returns an ``m_n x (m / m_n)`` matrix. Column ``c`` enumerates the
    remaining indices ``(i_1, ..., i_{n-1}, i_{n+1}, ..., i_k)`` in row-major
    order, i.e. the last remaining index runs fastest.
    """
    arr = _as_array(t)
    axis = _check_mode(n, arr.ndim)
    return np.moveaxis(arr, axis, 0).reshape(arr.shape[axis], -1)


def fold(mat, n, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(shape)
    axis = _check_mode(n, len(shape))
    mat = np.asarray(mat, dtype=np.float64)
    moved = (shape[axis],) + shape[:axis] + shape[axis + 1:]
    if mat.size != _prod(moved) or mat.shape[0] != shape[axis]:
        raise TensorShapeError(f"matrix of shape {mat.shape} cannot fold into {shape} along mode {n}")
    return DenseTensor(np.moveaxis(mat.reshape(moved), 0, axis))


def mode_n_product(t, mat, n):
    """Tucker product ``t ×_n mat``.

    ``result[i1..j..ik] = sum_{i_n} mat[j, i_n] * t[i1..i_n..ik]``; the
    result has mode n resized to ``mat.shape[0]``.
    """
    arr = _as_array(t)
    axis = _check_mode(n, arr.ndim)
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    if mat.ndim != 2 or mat.shape[1] != arr.shape[axis]:
        raise TensorShapeError(
            f"mode {n}: matrix has {mat.shape[-1]} columns but the tensor mode has size {arr.shape[axis]}"
        )
    out_shape = arr.shape[:axis] + (mat.shape[0],) + arr.shape[axis + 1:]
    return fold(mat @ unfold(arr, n), n, out_shape)


def multi_mode_product(t, mats):
    """Apply ``mats[p]`` along mode ``p + 1`` for every non-``None`` entry."""
    out = t if isinstance(t, DenseTensor) else DenseTensor(t)
    for p, mat in enumerate(mats):
        if mat is not None:
            out = mode_n_product(out, mat, p + 1)
    return out


def frobenius_norm_sq(t):
    """Sum of squared entries."""
    v = _as_array(t).ravel()
    return float(v @ v)


def vec(t):
    """Row-major vectorization (last index fastest)."""
    return _as_array(t).reshape(-1).copy()
