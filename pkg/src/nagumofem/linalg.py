"""Sparse storage, Krylov solves and M-matrix diagnostics.

Matrices are ``scipy.sparse.csr_matrix``. Finite element assembly goes
through :class:`CSRPattern`, which fixes the compressed structure of a mesh
once and then turns per-element triplet values into CSR data with a single
``bincount``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "IterativeSolverError",
    "CSRPattern",
    "triplets_to_csr",
    "SolveInfo",
    "krylov_solve",
    "solve_linear",
    "MatrixPropertyReport",
    "matrix_properties",
    "save_matrix_market",
]


class IterativeSolverError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def triplets_to_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Compress coordinate triplets, summing duplicates."""
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


class CSRPattern:
    """Fixed CSR structure for a list of (row, col) triplet positions.

    Column indices are strictly increasing within each row. ``scatter[t]``
    is the CSR slot that triplet ``t`` accumulates into.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.shape = tuple(shape)
        keys = rows * self.shape[1] + cols
        uniq, scatter = np.unique(keys, return_inverse=True)
        self.scatter = scatter.ravel()
        self.row = uniq // self.shape[1]
        self.indices = (uniq % self.shape[1]).astype(np.int32)
        self.indptr = np.zeros(self.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.row, minlength=self.shape[0]), out=self.indptr[1:])
        self.nnz = len(uniq)
        self.is_diag = self.row == self.indices
        diag = np.full(self.shape[0], -1, dtype=np.int64)
        diag[self.row[self.is_diag]] = np.flatnonzero(self.is_diag)
        self.diag = diag

    def accumulate(self, vals) -> np.ndarray:
        """CSR data array for triplet values ordered like the pattern."""
        return np.bincount(self.scatter, weights=np.ravel(vals), minlength=self.nnz)

    def matrix(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    def diagonal_data(self, diag_values) -> np.ndarray:
        data = np.zeros(self.nnz)
        ok = self.diag >= 0
        data[self.diag[ok]] = np.asarray(diag_values)[ok]
        return data


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float


def _is_symmetric(A: sp.csr_matrix, rtol=1e-14) -> bool:
    D = (A - A.T).tocsr()
    if D.nnz == 0:
        return True
    scale = abs(A).max() if A.nnz else 0.0
    return abs(D).max() <= rtol * max(scale, 1e-300)


def krylov_solve(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None) -> tuple[np.ndarray, SolveInfo]:
    """Jacobi-preconditioned CG for symmetric A, BiCGSTAB otherwise.

    The returned ``x`` satisfies ``||Ax - b|| <= tol ||b||`` or
    IterativeSolverError is raised carrying the residual reached.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or b.shape != (n,):
        raise ValueError("A must be square and b must match its size")
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo("none", 0, 0.0)

    diag = A.diagonal()
    inv = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 1.0)
    prec = spla.LinearOperator(A.shape, matvec=lambda v: inv * v, dtype=float)
    symmetric = _is_symmetric(A)
    method = "cg" if symmetric else "bicgstab"
    solver = spla.cg if symmetric else spla.bicgstab

    count = [0]

    def cb(_):
        count[0] += 1

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    res = np.inf
    # the recurrence residual can drift from the true one; restart a few times
    for _ in range(4):
        x, _info = solver(A, b, x0=x, rtol=tol * 0.5, atol=0.0, maxiter=max_iter, M=prec, callback=cb)
        res = np.linalg.norm(A @ x - b) / bnorm
        if res <= tol or count[0] >= max_iter:
            break
    if not res <= tol:
        raise IterativeSolverError(
            f"{method} did not converge: relative residual {res:.3e} after {count[0]} iterations",
            residual=res,
            iterations=count[0],
        )
    return x, SolveInfo(method, count[0], float(res))


def solve_linear(A, b, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Solve ``A x = b`` to relative residual ``tol``."""
    return krylov_solve(A, b, tol=tol, max_iter=max_iter)[0]


@dataclass
class MatrixPropertyReport:
    is_z_matrix: bool
    strictly_diag_dominant: bool
    row_sums_min: float
    max_offdiag: float
    failing_rows: list = field(default_factory=list)

    @property
    def is_m_matrix(self) -> bool:
        """Sufficient M-matrix test: Z-matrix and strictly diagonally dominant."""
        return self.is_z_matrix and self.strictly_diag_dominant


def matrix_properties(A, tau_z: float = 1e-12) -> MatrixPropertyReport:
    """Scan A for the Z-matrix sign pattern and strict row dominance.

    ``failing_rows`` lists rows with a positive off-diagonal above ``tau_z``
    or without strict dominance.
    """
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    off = rows != A.indices
    offvals = A.data[off]
    offrows = rows[off]
    max_off = float(offvals.max()) if offvals.size else -np.inf

    bad_sign = np.zeros(n, dtype=bool)
    bad_sign[offrows[offvals > tau_z]] = True
    abs_off = np.bincount(offrows, weights=np.abs(offvals), minlength=n)
    diag = A.diagonal()
    identity_row = (diag == 1.0) & (abs_off == 0.0)
    dominant = (diag > abs_off + tau_z) | identity_row
    row_sums = np.asarray(A.sum(axis=1)).ravel()
    failing = np.flatnonzero(bad_sign | ~dominant)
    return MatrixPropertyReport(
        is_z_matrix=not bad_sign.any(),
        strictly_diag_dominant=bool(dominant.all()),
        row_sums_min=float(row_sums.min()) if n else 0.0,
        max_offdiag=max_off,
        failing_rows=failing.tolist(),
    )


def save_matrix_market(A, target) -> None:
    """Dump a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(target, sp.coo_matrix(A))
