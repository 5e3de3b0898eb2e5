"""Minimal dense real-matrix kernel for the small systems used throughout.

Matrices are plain ``numpy.ndarray`` objects (row-major float64, 2-D), which
already satisfy the rows/cols/row-major-data contract. Everything here is
sized for matrices of at most a few hundred rows, so the solver is a plain
LU factorization with partial pivoting rather than anything blocked.

All operations are pure and reentrant; no state is shared between calls.
"""

from __future__ import annotations

import numpy as np

# Pivot magnitudes below this are treated as an exactly singular system.
PIVOT_TOL = 1e-12


class SingularMatrixError(ValueError):
    """Raised when a linear system is singular within the pivot tolerance."""


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce input to a finite float64 2-D array, optionally checking shape."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {m.shape[1]}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix product overflowed to non-finite entries")
    return out


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


def diag_from(v) -> np.ndarray:
    """Square diagonal matrix from a vector."""
    vec = np.asarray(v, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("diag_from expects a 1-D vector")
    return np.diag(vec)


def outer(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1:
        raise ValueError("outer expects 1-D vectors")
    return np.outer(u, v)


def basis(i: int, n: int) -> np.ndarray:
    """Standard basis vector e_i (0-based) of length n."""
    if not 0 <= i < n:
        raise ValueError(f"basis index {i} out of range for length {n}")
    e = np.zeros(n)
    e[i] = 1.0
    return e


def lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU factorization with partial pivoting.

    Returns the packed LU matrix (unit lower triangle implicit) and the row
    permutation applied. Raises :class:`SingularMatrixError` when the best
    available pivot falls below ``PIVOT_TOL``.
    """
    a = as_matrix(a)
    n, ncols = a.shape
    if n != ncols:
        raise ValueError(f"expected a square matrix, got {n}x{ncols}")
    lu = a.copy()
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < PIVOT_TOL:
            raise SingularMatrixError("singular system")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for a square ``a`` via LU with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    a = as_matrix(a)
    b_arr = np.asarray(b, dtype=np.float64)
    b_was_vector = b_arr.ndim == 1
    if b_was_vector:
        b_arr = b_arr[:, None]
    b_arr = as_matrix(b_arr)
    if b_arr.shape[0] != a.shape[0]:
        raise ValueError(
            f"right-hand side has {b_arr.shape[0]} rows, expected {a.shape[0]}"
        )
    lu, perm = lu_factor(a)
    n = a.shape[0]
    x = b_arr[perm].copy()
    # Forward substitution (unit lower triangle).
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    # Back substitution.
    for k in range(n - 1, -1, -1):
        if k + 1 < n:
            x[k] -= lu[k, k + 1 :] @ x[k + 1 :]
        x[k] /= lu[k, k]
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("singular system")
    return x[:, 0] if b_was_vector else x


def inverse(a: np.ndarray) -> np.ndarray:
    """Explicit inverse. Prefer :func:`solve` in production paths."""
    a = as_matrix(a)
    return solve(a, np.eye(a.shape[0]))
