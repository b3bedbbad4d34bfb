"""Complex sparse assembly and direct solves.

CSR storage and the LU factorization are delegated to scipy
(``csr_matrix`` and SuperLU); this module adds the triplet accumulator,
range checks, a singularity test and a residual guarantee.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, IndexOutOfRange, SingularMatrix

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14


class TripletBuffer:
    """Accumulates (row, col, value) contributions; duplicates are summed at finalize."""

    def __init__(self, n_rows: int, n_cols: int | None = None):
        self.n_rows = n_rows
        self.n_cols = n_rows if n_cols is None else n_cols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise DimensionMismatch("row and column index arrays differ in length")
        values = np.broadcast_to(np.asarray(values, dtype=complex), rows.shape).ravel()
        rows, cols = rows.ravel(), cols.ravel()
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def add_element_blocks(self, dofs: np.ndarray, blocks: np.ndarray) -> None:
        """Scatter dense element matrices ``blocks[e]`` onto ``dofs[e] x dofs[e]``."""
        m = dofs.shape[1]
        rows = np.repeat(dofs, m, axis=1)
        cols = np.tile(dofs, (1, m))
        self.add(rows, cols, blocks.reshape(len(dofs), m * m))

    def __len__(self) -> int:
        return sum(len(r) for r in self._rows)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._rows:
            return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex))
        return (np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals))


def finalize(buffer: TripletBuffer, n_rows: int | None = None, n_cols: int | None = None) -> sp.csr_matrix:
    """Convert accumulated triplets into a canonical complex CSR matrix."""
    n_rows = buffer.n_rows if n_rows is None else n_rows
    n_cols = buffer.n_cols if n_cols is None else n_cols
    rows, cols, vals = buffer.arrays()
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexOutOfRange(f"triplet index outside {n_rows}x{n_cols}")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols), dtype=complex).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def relative_residual(A, x: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def backward_error(A, x: np.ndarray, b: np.ndarray) -> float:
    """Normwise backward error ``|Ax - b| / (|A|_F |x| + |b|)``."""
    denom = spla.norm(A) * np.linalg.norm(x) + np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / denom) if denom > 0 else float(r)


class DirectSolver:
    """SuperLU factorization that can be reused for several right-hand sides."""

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=complex)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix is {A.shape[0]}x{A.shape[1]}, not square")
        self.A = A
        scale = np.abs(A.data).max() if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrix("matrix has no nonzero entries")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                self.lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularMatrix(str(exc)) from exc
        pivots = np.abs(self.lu.U.diagonal())
        if pivots.min() < PIVOT_TOL * scale:
            raise SingularMatrix(
                f"pivot magnitude {pivots.min():.3e} below {PIVOT_TOL:g} x max entry {scale:.3e}")
        self.last_residual = np.nan

    def solve(self, b: np.ndarray, refine_steps: int = 3) -> np.ndarray:
        b = np.asarray(b, dtype=complex)
        if b.shape[0] != self.A.shape[0]:
            raise DimensionMismatch(f"rhs length {b.shape[0]} != {self.A.shape[0]}")
        x = self.lu.solve(b)
        res = relative_residual(self.A, x, b)
        for _ in range(refine_steps):
            if res <= RESIDUAL_TOL:
                break
            x = x + self.lu.solve(b - self.A @ x)
            res = relative_residual(self.A, x, b)
        self.last_residual = res
        if res > RESIDUAL_TOL:
            # Near a resonance |x| >> |b| and rounding alone sets a residual floor.
            log.warning("direct solve residual %.3e exceeds %.0e (backward error %.1e)",
                        res, RESIDUAL_TOL, backward_error(self.A, x, b))
        return x


def solve_direct(A, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` by sparse LU with a fill-reducing ordering."""
    return DirectSolver(A).solve(b)


def augment_with_mean_constraint(A, weights: np.ndarray) -> sp.csr_matrix:
    """Border ``A`` with one Lagrange multiplier enforcing ``weights . x = 0``."""
    weights = np.asarray(weights, dtype=float).ravel()
    n = A.shape[0]
    if A.shape[1] != n or weights.shape[0] != n:
        raise DimensionMismatch(f"weights of length {weights.shape[0]} for a {A.shape} matrix")
    col = sp.csr_matrix(weights.reshape(-1, 1).astype(complex))
    B = sp.bmat([[sp.csr_matrix(A, dtype=complex), col], [col.T, None]], format="csr")
    B.sum_duplicates()
    B.sort_indices()
    return B
