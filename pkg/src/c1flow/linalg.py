"""Sparse storage helpers and the linear-solve contract.

Matrices are ``scipy.sparse.csr_matrix`` instances in canonical form
(sorted, duplicate-free column indices).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinearSolveError(RuntimeError):
    pass


@dataclass
class SolveReport:
    method: str
    residual_norm: float
    iterations: int = 0
    factor_time: float = 0.0
    solve_time: float = 0.0
    converged: bool = True


def from_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix from COO triplets; duplicate entries are summed."""
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix) -> None:
    """Raise ValueError unless ``A`` satisfies the CSR invariants."""
    if np.any(np.diff(A.indptr) < 0):
        raise ValueError("row offsets are not monotone")
    for i in range(A.shape[0]):
        idx = A.indices[A.indptr[i]:A.indptr[i + 1]]
        if np.any(np.diff(idx) <= 0):
            raise ValueError(f"column indices of row {i} are not strictly increasing")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")


class ScatterPattern:
    """Precomputed map from element-local entries to CSR slots.

    Build it once for a given set of (row, col) index arrays; afterwards
    ``assemble(vals)`` only accumulates values, in a fixed order, so the
    result is bitwise reproducible.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        key = rows.astype(np.int64) * shape[1] + cols
        uniq, self.slot = np.unique(key, return_inverse=True)
        self.slot = self.slot.ravel()
        r, c = np.divmod(uniq, shape[1])
        self.shape = shape
        self.indices = c.astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(shape[0] + 1)).astype(np.int32)
        self.nnz = len(uniq)

    def assemble(self, vals: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=np.asarray(vals).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def solve(A, b, method: str = "direct", tol: float = 1e-10, restart: int = 50,
          maxiter: int = 1000, refine: int = 2):
    """Solve ``A x = b``.

    ``method="direct"`` uses SuperLU with partial pivoting followed by up to
    ``refine`` steps of iterative refinement; ``method="gmres"`` uses
    restarted GMRES preconditioned by an incomplete LU factorisation and
    returns the best iterate with ``converged=False`` if it stalls.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n, ncol = A.shape
    if n != ncol:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {n}")
    bnorm = np.linalg.norm(b)

    def rel_res(x):
        r = np.linalg.norm(A @ x - b)
        return r / bnorm if bnorm > 0 else r

    if not np.all(np.isfinite(b)):
        raise LinearSolveError("right-hand side contains NaN or Inf")
    if bnorm == 0:
        return np.zeros(n), SolveReport(method, 0.0)

    if method == "direct":
        t0 = time.perf_counter()
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise LinearSolveError(f"LU factorisation failed: {exc}") from exc
        t1 = time.perf_counter()
        x = lu.solve(b)
        for _ in range(refine):
            if rel_res(x) <= tol:
                break
            x = x + lu.solve(b - A @ x)
        t2 = time.perf_counter()
        res = rel_res(x)
        if not np.isfinite(res):
            raise LinearSolveError("direct solve produced non-finite values (singular matrix?)")
        return x, SolveReport("direct", res, 0, t1 - t0, t2 - t1, bool(res <= tol))

    if method == "gmres":
        t0 = time.perf_counter()
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, ilu.solve)
        except RuntimeError:
            M = None
        t1 = time.perf_counter()
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, b, M=M, rtol=tol * 0.1, atol=0.0, restart=restart,
                             maxiter=maxiter, callback=cb, callback_type="pr_norm")
        t2 = time.perf_counter()
        res = rel_res(x)
        return x, SolveReport("iterative", res, count[0], t1 - t0, t2 - t1,
                              bool(info == 0 and res <= tol))
    raise ValueError(f"unknown solve method {method!r}")


def dump_matrix_market(path, A, comment: str = "") -> None:
    """Write ``A`` in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)


def condest(A) -> float:
    """1-norm condition number estimate from an LU factorisation."""
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A)
    except RuntimeError:
        return float("inf")
    inv = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"))
    return float(spla.norm(A, 1) * spla.onenormest(inv))
