"""Compressed sparse row storage and a preconditioned CG solver.

Only what the pressure system needs: assembly from (row, col, value)
triplets with duplicate summation, matrix-vector products and PCG.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class LinearSolverError(RuntimeError):
    """Raised when CG fails to reach the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SparseMatrix:
    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def nnz(self):
        return int(self.data.size)

    @cached_property
    def row_of_entry(self):
        return np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    def diagonal(self):
        d = np.zeros(min(self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        mask = rows == self.indices
        d[rows[mask]] = self.data[mask]
        return d

    def todense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def is_structurally_symmetric(self):
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        fwd = set(zip(rows.tolist(), self.indices.tolist()))
        return all((c, r) in fwd for r, c in fwd)

    def __matmul__(self, x):
        return spmv(self, x)


def from_triplets(n, rows, cols=None, values=None, n_cols=None):
    """Build an ``n`` x ``n_cols`` CSR matrix from triplets.

    Accepts either three parallel arrays or a single iterable of
    ``(row, col, value)`` tuples. Duplicate entries are summed and column
    indices end up strictly increasing inside each row.
    """
    if cols is None and values is None:
        entries = list(rows)
        if entries:
            rows, cols, values = (np.asarray(v) for v in zip(*entries))
        else:
            rows, cols, values = np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    n_cols = n if n_cols is None else n_cols
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (rows.size == cols.size == values.size):
        raise ValueError("triplet arrays must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError(f"triplet index out of range for {n}x{n_cols} matrix")

    order = np.lexsort((cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    if rows.size:
        key = rows * n_cols + cols
        start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        values = np.add.reduceat(values, start)
        rows, cols = rows[start], cols[start]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseMatrix(n, n_cols, indptr, cols, values)


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise ValueError(f"spmv: vector of length {x.size} against {A.n_rows}x{A.n_cols} matrix")
    if A.nnz == 0:
        return np.zeros(A.n_rows)
    return np.bincount(A.row_of_entry, weights=A.data * x[A.indices], minlength=A.n_rows)


def solve_cg(A, b, tol=1e-10, max_iter=None, x0=None, return_info=False, precond=None):
    """Preconditioned conjugate gradients for SPD ``A``.

    Converges when ``||b - A x|| <= tol * ||b||``. ``precond`` applies an
    SPD approximation of ``A^-1`` to a vector; Jacobi scaling by default.
    With ``return_info`` the iteration count is returned alongside the
    solution.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = A.n_rows
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(n)
        return (x, 0) if return_info else x

    diag = A.diagonal()
    if np.any(diag <= 0):
        raise LinearSolverError("non-positive diagonal, matrix is not SPD", np.inf, 0)
    if precond is None:
        inv_d = 1.0 / diag
        precond = lambda v: inv_d * v  # noqa: E731

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - spmv(A, x)
    z = precond(r)
    d = z.copy()
    rz = r @ z
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol:
        if it >= max_iter:
            raise LinearSolverError(
                f"CG did not converge in {max_iter} iterations (relative residual {res:.3e})",
                res, it)
        Ad = spmv(A, d)
        alpha = rz / (d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        z = precond(r)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
        res = np.linalg.norm(r) / bnorm
    return (x, it) if return_info else x
