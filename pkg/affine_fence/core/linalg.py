"""Dense float64 kernels shared by every service.

Matrices are row-major ``numpy`` arrays of shape ``(rows, cols)``; vectors are
1-D arrays. All entries must be finite.
"""

import numpy as np

from affine_fence.services.exceptions import (
    DimensionMismatchError,
    NonFiniteValueError,
    RankDeficientError,
)


def as_vector(data, what: str = "vector") -> np.ndarray:
    vector = np.asarray(data, dtype=np.float64)
    if vector.ndim == 0:
        vector = vector.reshape(1)
    if vector.ndim != 1:
        raise DimensionMismatchError(what, "1-D array", f"{vector.ndim}-D array")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteValueError(what)
    return vector


def as_matrix(data, what: str = "matrix") -> np.ndarray:
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise DimensionMismatchError(what, "2-D array", f"{matrix.ndim}-D array")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteValueError(what)
    return matrix


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with shape checking.

    Args:
        m (np.ndarray): Matrix of shape (rows, cols).
        v (np.ndarray): Vector of length cols.

    Raises:
        DimensionMismatchError: If ``m.cols`` differs from the vector length.

    Returns:
        np.ndarray: Vector of length rows.
    """
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise DimensionMismatchError("matvec operand", m.shape[1], v.shape[0])
    return m @ v


def least_squares(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve min ||aX - b||_F through an SVD-based factorization.

    A 1-D ``b`` is treated as a single column and a 1-D solution is returned.

    Args:
        a (np.ndarray): Design matrix with at least as many rows as columns.
        b (np.ndarray): Right-hand side with ``a.rows`` rows.

    Raises:
        DimensionMismatchError: If the shapes are incompatible.
        RankDeficientError: If ``a`` does not have full column rank.

    Returns:
        np.ndarray: The minimizer X.
    """
    a = as_matrix(a, "design matrix")
    squeeze = np.ndim(b) == 1
    b = as_matrix(b, "right-hand side")
    if a.shape[0] < a.shape[1]:
        raise DimensionMismatchError("design matrix rows", f">= {a.shape[1]}", a.shape[0])
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError("right-hand side rows", a.shape[0], b.shape[0])

    solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < a.shape[1]:
        raise RankDeficientError(rank=int(rank), cols=a.shape[1])
    return solution[:, 0] if squeeze else solution
