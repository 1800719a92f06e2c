"""Dense/sparse linear-algebra kernels shared by the whole library.

The only sparse format is CSR (:class:`SparseMatrix`). Dense matrices and
vectors are plain ``numpy.ndarray`` objects (row-major, float64). All
operations here are pure; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseMatrix",
    "matvec",
    "matvec_t",
    "thin_qr",
    "dense_svd",
    "spectral_norm",
]

# Density above which a dense copy is kept alongside the CSR arrays and used
# for products (gisette-like inputs are nearly dense; CSR gather is wasted
# work there).
_DENSE_FALLBACK_DENSITY = 0.5


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable CSR matrix.

    Parameters
    ----------
    n_rows, n_cols : int
        Matrix shape.
    row_ptr : ndarray of int64, shape (n_rows + 1,)
        Row offsets into ``col_idx``/``values``.
    col_idx : ndarray of int64
        Column indices; strictly increasing within each row.
    values : ndarray of float64
        Nonzero entries, finite.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if rp.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows + 1")
        if rp[0] != 0 or rp[-1] != len(v) or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be nondecreasing with row_ptr[0]=0, row_ptr[-1]=nnz")
        if len(ci) != len(v):
            raise ValueError("col_idx and values must have equal length")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        # strictly increasing within each row: diffs may only be <= 0 at row starts
        if len(ci) > 1:
            bad = np.flatnonzero(np.diff(ci) <= 0) + 1
            if len(bad) and not np.all(np.isin(bad, rp[1:-1])):
                raise ValueError("col_idx must be strictly increasing within each row")
        if len(v) and not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        """Build from a dense 2-d array, keeping exact nonzeros."""
        csr = sp.csr_matrix(np.asarray(arr, dtype=np.float64))
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = sp.csr_matrix(mat).copy()
        csr.sort_indices()
        csr.sum_duplicates()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    # -- views --------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def _scipy(self) -> sp.csr_matrix:
        csr = self._cache.get("csr")
        if csr is None:
            csr = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape, copy=False
            )
            self._cache["csr"] = csr
        return csr

    def _dense(self):
        """Dense copy, kept only when density > 0.5 (see module notes)."""
        size = self.n_rows * self.n_cols
        if size == 0 or self.nnz / size <= _DENSE_FALLBACK_DENSITY:
            return None
        arr = self._cache.get("dense")
        if arr is None:
            arr = self._scipy().toarray()
            self._cache["dense"] = arr
        return arr

    def toarray(self) -> np.ndarray:
        return self._scipy().toarray()

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i``."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def row_sq_norms(self) -> np.ndarray:
        """Squared 2-norm of every row, length n_rows."""
        return np.add.reduceat(
            np.concatenate([self.values**2, [0.0]]), self.row_ptr[:-1]
        ) * (np.diff(self.row_ptr) > 0)

    def frobenius_sq(self) -> float:
        return float(np.dot(self.values, self.values))

    def scale(self, alpha: float) -> "SparseMatrix":
        """Return ``alpha * self`` as a new matrix."""
        return SparseMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, alpha * self.values)


def matvec(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Return ``A @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"matvec: x has length {x.shape}, expected ({A.n_cols},)")
    dense = A._dense()
    if dense is not None:
        return dense @ x
    return A._scipy() @ x


def matvec_t(A: SparseMatrix, y: np.ndarray) -> np.ndarray:
    """Return ``A.T @ y``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.n_rows,):
        raise ValueError(f"matvec_t: y has length {y.shape}, expected ({A.n_rows},)")
    dense = A._dense()
    if dense is not None:
        return dense.T @ y
    return A._scipy().T @ y


def thin_qr(M: np.ndarray, drop_tol: float = 1e-12, ref_scale: float | None = None) -> np.ndarray:
    """Orthonormal basis for the column space of ``M``.

    Modified Gram-Schmidt with one reorthogonalization pass. Columns whose
    residual norm falls below ``drop_tol`` times the largest column norm of
    ``M`` are treated as numerically dependent and dropped, so the result may
    have fewer columns than ``M``. An all-zero input yields a matrix with
    zero columns.

    ``ref_scale`` overrides the reference magnitude for the drop test;
    callers that pre-deflate their input (the block Lanczos recursion) pass
    the pre-deflation column scale so that leftover rounding noise is not
    mistaken for new directions.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("thin_qr expects a 2-d array")
    n, k = M.shape
    if ref_scale is not None:
        ref = float(ref_scale)
    else:
        ref = float(np.linalg.norm(M, axis=0).max()) if k else 0.0
    if ref == 0.0:
        return np.zeros((n, 0))
    cols = []
    for j in range(k):
        v = M[:, j].copy()
        for _ in range(2):  # MGS + one reorthogonalization pass
            for q in cols:
                v -= np.dot(q, v) * q
        nrm = np.linalg.norm(v)
        if nrm < drop_tol * ref:
            continue
        cols.append(v / nrm)
    if not cols:
        return np.zeros((n, 0))
    return np.column_stack(cols)


def dense_svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full thin SVD ``M = U @ diag(S) @ V.T`` of a small dense matrix.

    ``S`` is nonincreasing and nonnegative; ``U`` and ``V`` have orthonormal
    columns. Only meant for matrices with min(shape) <= 10000 (in this
    library it is only ever applied to the small Krylov projection).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("dense_svd expects a 2-d array")
    if min(M.shape) > 10000:
        raise ValueError("dense_svd is restricted to min(shape) <= 10000")
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    return U, S, Vt.T


def spectral_norm(
    A: SparseMatrix, tol: float = 1e-10, max_iters: int = 5000, seed: int = 0
) -> tuple[float, bool]:
    """Largest singular value of ``A`` by power iteration on ``A.T @ A``.

    Starts from a seeded random unit vector and stops when the relative
    change of the estimate drops below ``tol``. Returns ``(sigma, converged)``;
    on non-convergence the best estimate is returned with ``converged=False``.
    """
    if A.nnz == 0:
        raise ValueError("spectral_norm requires a nonzero matrix")
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(A.n_cols)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iters):
        w = matvec_t(A, matvec(A, v))
        nw = np.linalg.norm(w)
        if nw == 0.0:  # v fell in the null space; restart randomly
            v = rng.standard_normal(A.n_cols)
            v /= np.linalg.norm(v)
            continue
        new_sigma = np.sqrt(nw)
        v = w / nw
        if sigma > 0 and abs(new_sigma - sigma) <= tol * sigma:
            return float(new_sigma), True
        sigma = new_sigma
    return float(sigma), False
