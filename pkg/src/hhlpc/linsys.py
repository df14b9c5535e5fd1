"""Sparse linear algebra: CSR storage, products, CG and a dense elimination oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

EPS_FLOOR = 1e-30
DEFAULT_TOL = 1e-8


class MatrixConstructionError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


class ConvergenceError(ArithmeticError):
    """CG ran out of iterations. Carries the last iterate and its residual."""

    def __init__(self, residual: float, iterations: int, x: np.ndarray):
        super().__init__(f"CG did not converge: relative residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations
        self.x = x


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Canonical compressed-sparse-row matrix (sorted, duplicate-free columns)."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offs = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if offs.shape != (self.n_rows + 1,) or offs[0] != 0 or offs[-1] != vals.size:
            raise MatrixConstructionError("row_offsets must have length n_rows+1 and end at nnz")
        if np.any(np.diff(offs) < 0):
            raise MatrixConstructionError("row_offsets must be nondecreasing")
        if cols.size != vals.size:
            raise MatrixConstructionError("col_indices and values differ in length")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise MatrixConstructionError("column index out of range")
        rows = np.repeat(np.arange(self.n_rows), np.diff(offs))
        same_row = rows[1:] == rows[:-1]
        if np.any(cols[1:][same_row] <= cols[:-1][same_row]):
            raise MatrixConstructionError("columns must be strictly increasing within a row")
        object.__setattr__(self, "row_offsets", offs)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_csr", sp.csr_matrix((vals, cols, offs), shape=(self.n_rows, self.n_cols)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.row_ids(), self.col_indices.copy(), self.values.copy()

    def diagonal(self) -> np.ndarray:
        rows = self.row_ids()
        mask = rows == self.col_indices
        d = np.zeros(min(self.n_rows, self.n_cols))
        d[rows[mask]] = self.values[mask]
        return d

    def transpose(self) -> "SparseMatrix":
        r, c, v = self.triplets()
        return _from_arrays(self.n_cols, self.n_rows, c, r, v)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose()
        if t.nnz != self.nnz or not (
            np.array_equal(t.row_offsets, self.row_offsets) and np.array_equal(t.col_indices, self.col_indices)
        ):
            # structural mismatch is tolerated only if the mismatching entries are ~0
            diff = (self._csr - t._csr).tocoo()
            return bool(np.all(np.abs(diff.data) <= tol))
        return bool(np.all(np.abs(t.values - self.values) <= tol))

    def todense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def dump_coo(self, path: str | Path) -> None:
        """Debug dump: one ``row col value`` triple per line, 0-indexed."""
        r, c, v = self.triplets()
        with open(path, "w") as fh:
            for ri, ci, vi in zip(r, c, v):
                fh.write(f"{int(ri)} {int(ci)} {float(vi)!r}\n")


def _from_arrays(n_rows: int, n_cols: int, rows, cols, vals) -> SparseMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise MatrixConstructionError("triplet index out of range")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        key_change = np.empty(rows.size, dtype=bool)
        key_change[0] = True
        key_change[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(key_change)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, cols, vals)


def csr_from_triplets(n: int, entries: Iterable[tuple[int, int, float]] | None = None, *,
                      rows=None, cols=None, vals=None, n_cols: int | None = None) -> SparseMatrix:
    """Build a canonical CSR matrix, summing duplicate (row, col) pairs.

    Either pass ``entries`` as (row, col, value) tuples, or the three arrays
    ``rows``/``cols``/``vals`` directly (the fast path used by assembly code).
    """
    if entries is not None:
        entries = list(entries)
        rows = [e[0] for e in entries]
        cols = [e[1] for e in entries]
        vals = [e[2] for e in entries]
    if rows is None:
        rows, cols, vals = [], [], []
    return _from_arrays(n, n if n_cols is None else n_cols, rows, cols, vals)


def canonicalize(a: SparseMatrix) -> SparseMatrix:
    r, c, v = a.triplets()
    return _from_arrays(a.n_rows, a.n_cols, r, c, v)


def spmv(a: SparseMatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (a.n_cols,):
        raise DimensionError(f"vector length {v.shape} does not match {a.n_cols} columns")
    return a.to_scipy() @ v


@dataclass(eq=False)
class Lsp:
    """Linear system A x = b.

    ``shift`` adds the rank-one term ``shift * 1 1^T`` to ``matrix`` without
    storing it; it is how the mean-pressure/gauge pin enters the solvers.
    ``reference_solution`` is filled lazily by :func:`oracle_solve`.
    """

    matrix: SparseMatrix
    rhs: np.ndarray
    shift: float = 0.0
    reference_solution: Optional[np.ndarray] = None
    initial_guess: Optional[np.ndarray] = None
    reference_iterations: int = 0
    # tolerance the hidden reference solve uses
    solve_tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        if self.matrix.n_rows != self.matrix.n_cols:
            raise DimensionError("LSP matrix must be square")
        if self.rhs.shape != (self.matrix.n_rows,):
            raise DimensionError("rhs length must equal matrix dimension")

    @property
    def n(self) -> int:
        return self.matrix.n_rows

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = spmv(self.matrix, v)
        if self.shift:
            out += self.shift * v.sum()
        return out

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal() + self.shift

    def dense(self) -> np.ndarray:
        return self.matrix.todense() + self.shift

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.matvec(x) - self.rhs) / max(np.linalg.norm(self.rhs), EPS_FLOOR))

    def with_rhs(self, rhs) -> "Lsp":
        return Lsp(self.matrix, np.asarray(rhs, dtype=np.float64), shift=self.shift, solve_tol=self.solve_tol)


@dataclass(frozen=True)
class CgResult:
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(lsp: Lsp, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             precond: str = "jacobi", x0: np.ndarray | None = None) -> CgResult:
    """Preconditioned conjugate gradient on a symmetric positive (semi)definite LSP.

    Convergence is judged on the true relative residual ||A x - b|| / max(||b||, 1e-30).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if precond not in ("none", "jacobi"):
        raise ValueError(f"unknown preconditioner {precond!r}")
    n = lsp.n
    max_iter = 10 * n if max_iter is None else max_iter
    b = lsp.rhs
    bnorm = max(float(np.linalg.norm(b)), EPS_FLOOR)
    if not np.any(b):
        return CgResult(np.zeros(n), 0, 0.0)

    if precond == "jacobi":
        d = lsp.diagonal()
        inv_d = np.where(np.abs(d) > 0, 1.0 / np.where(d == 0, 1.0, d), 1.0)
    else:
        inv_d = None

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - lsp.matvec(x)
    res = float(np.linalg.norm(r)) / bnorm
    if res <= tol:
        return CgResult(x, 0, res)
    z = r * inv_d if inv_d is not None else r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < max_iter:
        ap = lsp.matvec(p)
        pap = float(p @ ap)
        if pap <= 0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            # guard against drift of the recursive residual
            true_res = lsp.residual(x)
            if true_res <= tol:
                return CgResult(x, it, true_res)
            r = b - lsp.matvec(x)
        z = r * inv_d if inv_d is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(lsp.residual(x), it, x)


def direct_solve_dense(a, b, pivot_tol: float = 1e-12) -> np.ndarray:
    """Gaussian elimination with partial pivoting. Test oracle; meant for n <= 64."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n,):
        raise DimensionError("A must be square and match b")
    scale = max(np.abs(a).max(), EPS_FLOOR)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) < pivot_tol * scale:
            raise SingularMatrixError(f"pivot {a[piv, k]:.3e} below threshold in column {k}")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            b[[k, piv]] = b[[piv, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def oracle_solve(lsp: Lsp, tol: float | None = None) -> np.ndarray:
    """Solve and cache ``lsp.reference_solution``; the emulator's hidden classical solve."""
    if lsp.reference_solution is None:
        res = cg_solve(lsp, tol=lsp.solve_tol if tol is None else tol, x0=lsp.initial_guess)
        lsp.reference_solution = res.x
        lsp.reference_iterations = res.iterations
    return lsp.reference_solution
