"""Dense matrix helpers and the covariance / Frobenius primitives.

A "matrix" throughout the package is a 2-D ``float64`` numpy array with
rows as samples and columns as features. numpy does the arithmetic; the
functions here add shape checking and the finiteness guarantee.
"""

import numpy as np

from .errors import DegenerateBatchError, DimensionError, NonFiniteError


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite float64 2-D array (a view when possible)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return check_finite(a, name)


def check_finite(a, name="matrix"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def _shape(a):
    return f"({a.shape[0]}x{a.shape[1]})"


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {_shape(a)} by {_shape(b)}")
    return check_finite(a @ b, "matmul result")


def transpose(a):
    return as_matrix(a).T.copy()


def _same_shape(a, b, op):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {_shape(a)} vs {_shape(b)}")
    return a, b


def add(a, b):
    a, b = _same_shape(a, b, "add")
    return check_finite(a + b, "add result")


def sub(a, b):
    a, b = _same_shape(a, b, "sub")
    return check_finite(a - b, "sub result")


def hadamard(a, b):
    a, b = _same_shape(a, b, "hadamard")
    return check_finite(a * b, "hadamard result")


def scale(a, s):
    return check_finite(as_matrix(a) * float(s), "scale result")


def add_row(a, row):
    """Add a 1 x cols row vector to every row of ``a``."""
    a = as_matrix(a, "a")
    row = as_matrix(row, "row")
    if row.shape != (1, a.shape[1]):
        raise DimensionError(f"row-broadcast: {_shape(row)} does not fit {_shape(a)}")
    return check_finite(a + row, "add_row result")


def col_mean(a):
    """Column means as a 1 x cols matrix."""
    a = as_matrix(a)
    if a.shape[0] == 0:
        raise DimensionError("column mean of an empty matrix")
    return a.mean(axis=0, keepdims=True)


def covariance(f):
    """Unbiased feature covariance of a samples-by-features matrix.

    Uses the uncentered form ``(F^T F - (1^T F)^T (1^T F) / N) / (N - 1)``
    and symmetrizes the result so it is exactly symmetric.
    """
    f = as_matrix(f, "features")
    n = f.shape[0]
    if n < 2:
        raise DegenerateBatchError(f"covariance needs at least 2 rows, got {n}")
    colsum = f.sum(axis=0, keepdims=True)
    c = (f.T @ f - colsum.T @ colsum / n) / (n - 1)
    c = 0.5 * (c + c.T)
    return check_finite(c, "covariance")


def frobenius_sq(a):
    a = as_matrix(a)
    return float(np.sum(a * a))
