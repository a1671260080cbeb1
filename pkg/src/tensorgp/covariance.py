"""Per-mode covariance matrices: SQE kernels, the free 2x2 factor, whitening."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .exceptions import DomainError, FactorizationError, TensorShapeError
from .tensor import DenseTensor, _as_array

DEFAULT_JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class SpdFactor:
    """Symmetric positive-definite matrix with its lower Cholesky factor.

    Attributes
    ----------
    matrix : ndarray, shape (dim, dim)
    chol : ndarray, shape (dim, dim)
        Lower triangular, positive diagonal, ``matrix = chol @ chol.T``.
    log_det : float
        ``2 * sum(log(diag(chol)))``.
    """

    matrix: np.ndarray
    chol: np.ndarray
    log_det: float

    @property
    def dim(self):
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix, hint=""):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise TensorShapeError(f"covariance must be square, got {matrix.shape}")
        try:
            chol = np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError as exc:
            msg = "matrix is not numerically positive definite"
            raise FactorizationError(f"{msg}{'; ' + hint if hint else ''}") from exc
        return cls._build(matrix, chol)

    @classmethod
    def from_cholesky(cls, chol):
        chol = np.asarray(chol, dtype=np.float64)
        if np.any(np.diag(chol) <= 0):
            raise FactorizationError("Cholesky factor must have a positive diagonal")
        return cls._build(chol @ chol.T, chol)

    @classmethod
    def identity(cls, dim):
        eye = np.eye(dim)
        return cls._build(eye, eye.copy())

    @classmethod
    def _build(cls, matrix, chol):
        matrix.setflags(write=False)
        chol.setflags(write=False)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return cls(matrix=matrix, chol=chol, log_det=log_det)


@dataclass(frozen=True)
class SqeParams:
    """Diagonal of the smoothness matrix ``Q`` of an SQE kernel."""

    q: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in np.atleast_1d(self.q))
        if not q:
            raise DomainError("SQE kernel needs at least one smoothness parameter")
        if not all(v > 0 for v in q):
            raise DomainError(f"smoothness parameters must be positive, got {q}")
        object.__setattr__(self, "q", q)

    def __len__(self):
        return len(self.q)


@dataclass(frozen=True)
class FreeFactor2x2:
    """Unconstrained factor ``A`` with ``Sigma = A @ A.T``."""

    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64).reshape(2, 2)
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 0]), float(a[1, 1]))

    def as_array(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21


def sqe_kernel(points, params, jitter=DEFAULT_JITTER):
    """Squared-exponential Gram matrix over ``points``, factorized.

    Entry ``(i, j)`` is ``exp(-sum_l q_l (s_il - s_jl)^2)`` plus ``jitter`` on
    the diagonal.

    Parameters
    ----------
    points : array_like, shape (n, d)
    params : SqeParams or array_like of length d
    jitter : float, default 1e-8

    Raises
    ------
    FactorizationError
        If the matrix is not numerically positive definite, typically
        because of duplicate points with too little jitter.
    """
    q = np.asarray(params.q if isinstance(params, SqeParams) else params, dtype=np.float64)
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != q.shape[0]:
        raise TensorShapeError(
            f"points of shape {points.shape} do not match {q.shape[0]} smoothness parameters"
        )
    if jitter < 0:
        raise DomainError("jitter must be nonnegative")
    gram = kernels.sqe_gram(points, np.ascontiguousarray(q), float(jitter))
    return SpdFactor.from_matrix(gram, hint=f"increase jitter (currently {jitter:g}) or remove duplicate points")


def sigma3_from_factor(f, tol=1e-12):
    """``A @ A.T`` for a 2x2 factor, with a closed-form Cholesky.

    Raises
    ------
    DomainError
        If ``|det(A)| <= tol``.
    """
    a = f.as_array() if isinstance(f, FreeFactor2x2) else np.asarray(f, dtype=np.float64).reshape(2, 2)
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if not np.isfinite(det) or abs(det) <= tol:
        raise DomainError(f"factor is singular (det={det:.3g})")
    sigma = a @ a.T
    l11 = np.sqrt(sigma[0, 0])
    l21 = sigma[1, 0] / l11
    l22 = abs(det) / l11
    chol = np.array([[l11, 0.0], [l21, l22]])
    return SpdFactor(matrix=sigma, chol=chol, log_det=2.0 * (np.log(l11) + np.log(l22)))


def _apply_modes(arr, chols, solve):
    for axis, chol in enumerate(chols):
        m = arr.shape[axis]
        if chol.shape[0] != m:
            raise TensorShapeError(
                f"mode {axis + 1}: factor has dim {chol.shape[0]} but tensor mode has size {m}"
            )
        moved = np.moveaxis(arr, axis, 0)
        flat = moved.reshape(m, -1)
        if solve:
            flat = solve_triangular(chol, flat, lower=True, check_finite=False)
        else:
            flat = chol @ flat
        arr = np.moveaxis(flat.reshape(moved.shape), 0, axis)
    return arr


def _check_factor_count(arr, factors):
    if len(factors) != arr.ndim:
        raise TensorShapeError(f"{len(factors)} factors given for a {arr.ndim}-mode tensor")


def whiten_array(arr, factors):
    """ndarray version of :func:`whiten`."""
    _check_factor_count(arr, factors)
    return _apply_modes(arr, [f.chol for f in factors], solve=True)


def whiten(t, factors):
    """``t ×_1 L_1^{-1} ×_2 ... ×_k L_k^{-1}`` via triangular solves."""
    arr = _as_array(t)
    return DenseTensor(whiten_array(arr, factors))


def unwhiten(t, factors):
    """``t ×_1 L_1 ×_2 ... ×_k L_k``; inverse of :func:`whiten`."""
    arr = _as_array(t)
    _check_factor_count(arr, factors)
    return DenseTensor(_apply_modes(arr, [f.chol for f in factors], solve=False))
