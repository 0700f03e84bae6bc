"""Sparse and small dense symmetric matrices, Laplacian generators and MatrixMarket I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, MatrixMarketError, SymmetryError, SliceEigError

MAX_ANALYTIC = 10_000_000
MAX_DENSE = 5000
_SYM_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Real symmetric sparse matrix in compressed-sparse-row form.

    Construction validates the structural invariants (sorted, in-range
    column indices) and numerical symmetry. Instances are read-only and
    safe to share between threads.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    _scipy: sp.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        vals = np.ascontiguousarray(self.vals, dtype=np.float64)
        n = int(self.n)
        if n < 1:
            raise DimensionError("matrix must have at least one row")
        if row_ptr.shape != (n + 1,):
            raise DimensionError("row_ptr must have length n+1")
        if row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
            raise SliceEigError("row_ptr must start at 0 and be nondecreasing")
        if row_ptr[-1] != col_idx.size or col_idx.size != vals.size:
            raise DimensionError("row_ptr[n] must equal len(col_idx) = len(vals)")
        if col_idx.size and (col_idx.min() < 0 or col_idx.max() >= n):
            raise SliceEigError("column index out of range")
        # strictly increasing inside each row: every within-row step is positive
        steps = np.diff(col_idx)
        row_start = np.zeros(col_idx.size, dtype=bool)
        row_start[row_ptr[:-1][row_ptr[:-1] < col_idx.size]] = True
        if np.any(steps[~row_start[1:]] <= 0):
            raise SliceEigError("column indices must be strictly increasing within rows")
        for name, arr in (("row_ptr", row_ptr), ("col_idx", col_idx), ("vals", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n", n)
        mat = sp.csr_matrix((vals, col_idx, row_ptr), shape=(n, n))
        mat.has_sorted_indices = True
        object.__setattr__(self, "_scipy", mat)
        _check_symmetric(mat)

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        """Build from any scipy sparse matrix (explicit zeros are dropped)."""
        mat = sp.csr_matrix(mat, dtype=np.float64)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"matrix is not square: {mat.shape}")
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(mat.shape[0], mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_triplets(cls, n, rows, cols, vals) -> "CsrMatrix":
        """Build from 0-based triplets; duplicates are summed."""
        coo = sp.coo_matrix((np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))), shape=(n, n))
        return cls.from_scipy(coo.tocsr())

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=float)))

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def shape(self):
        return (self.n, self.n)

    def to_scipy(self) -> sp.csr_matrix:
        """Shared read-only scipy view; do not mutate."""
        return self._scipy

    def to_dense(self) -> np.ndarray:
        return self._scipy.toarray()

    def matvec(self, x):
        return csr_matvec(self, x)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return csr_matvec(self, x)
        if x.shape[0] != self.n:
            raise DimensionError(f"expected {self.n} rows, got {x.shape[0]}")
        return self._scipy @ x

    def diagonal(self) -> np.ndarray:
        return self._scipy.diagonal()

    def triplets(self):
        """Return (rows, cols, vals) in row-major order, 0-based."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        return rows, self.col_idx.copy(), self.vals.copy()

    def norm1(self) -> float:
        """Maximum absolute column sum (equal to the row sum by symmetry)."""
        return float(abs(self._scipy).sum(axis=0).max())


def _check_symmetric(mat):
    t = mat.T.tocsr()
    t.sort_indices()
    same_pattern = np.array_equal(t.indptr, mat.indptr) and np.array_equal(t.indices, mat.indices)
    if not same_pattern:
        diff = (mat - t).tocoo()
        bad = np.flatnonzero(diff.data != 0)
        i, j = (int(diff.row[bad[0]]), int(diff.col[bad[0]])) if bad.size else (-1, -1)
        raise SymmetryError(f"matrix is not symmetric: entry ({i}, {j}) has no matching transpose entry")
    tol = _SYM_RTOL * np.maximum(1.0, np.abs(mat.data))
    bad = np.flatnonzero(np.abs(mat.data - t.data) > tol)
    if bad.size:
        k = bad[0]
        i = int(np.searchsorted(mat.indptr, k, side="right") - 1)
        j = int(mat.indices[k])
        raise SymmetryError(
            f"matrix is not symmetric: A[{i},{j}]={mat.data[k]!r} but A[{j},{i}]={t.data[k]!r}"
        )


def csr_matvec(A: CsrMatrix, x) -> np.ndarray:
    """Sparse matrix-vector product ``A @ x``."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != A.n:
        raise DimensionError(f"vector of length {A.n} expected, got shape {x.shape}")
    return A._scipy @ x


@dataclass(frozen=True)
class TriDiag:
    """Symmetric tridiagonal matrix: diagonal ``alpha`` and off-diagonal ``beta``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if alpha.size < 1 or alpha.size != beta.size + 1:
            raise DimensionError("TriDiag needs len(alpha) = len(beta) + 1 >= 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.alpha.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.alpha) + np.diag(self.beta, 1) + np.diag(self.beta, -1)

    def norm(self) -> float:
        """Infinity norm (max absolute row sum)."""
        rows = np.abs(self.alpha).copy()
        rows[:-1] += np.abs(self.beta)
        rows[1:] += np.abs(self.beta)
        return float(rows.max())


class DenseSym:
    """Small dense symmetric matrix with mirrored storage (column-major)."""

    def __init__(self, n, data=None):
        self.n = int(n)
        self._a = np.zeros((self.n, self.n), order="F")
        if data is not None:
            data = np.asarray(data, dtype=float)
            if data.shape != (self.n, self.n):
                raise DimensionError(f"expected {(self.n, self.n)} data, got {data.shape}")
            if not np.array_equal(data, data.T):
                raise SymmetryError("DenseSym data must be exactly symmetric")
            self._a[:] = data

    def __getitem__(self, ij):
        return self._a[ij]

    def __setitem__(self, ij, value):
        i, j = ij
        self._a[i, j] = value
        self._a[j, i] = value

    def to_array(self) -> np.ndarray:
        return self._a.copy()


def dense_sym_eig(M):
    """Full eigendecomposition of a dense symmetric matrix (ascending).

    Accepts a `DenseSym` or a symmetric ndarray. Used as the brute-force
    oracle and for small projected problems.
    """
    a = M.to_array() if isinstance(M, DenseSym) else np.asarray(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError("square matrix expected")
    if a.shape[0] > MAX_DENSE:
        raise SliceEigError(f"dense eigensolver limited to n <= {MAX_DENSE}, got {a.shape[0]}")
    return np.linalg.eigh(a)


def gen_laplacian(dims) -> CsrMatrix:
    """Negative finite-difference Laplacian on a 1-D/2-D/3-D grid.

    Dirichlet boundaries; diagonal ``2*len(dims)`` and ``-1`` couplings to
    grid neighbours (3-, 5- or 7-point stencil). Unknowns are numbered with
    the first dimension varying fastest.
    """
    dims = _check_dims(dims)
    mats = [sp.diags([-np.ones(d - 1), 2 * np.ones(d), -np.ones(d - 1)], [-1, 0, 1], format="csr") for d in dims]
    eyes = [sp.identity(d, format="csr") for d in dims]
    total = None
    for axis in range(len(dims)):
        term = None
        # kron(A_last, ..., A_first) keeps dims[0] as the fastest index
        for k in reversed(range(len(dims))):
            block = mats[k] if k == axis else eyes[k]
            term = block if term is None else sp.kron(term, block, format="csr")
        total = term if total is None else total + term
    return CsrMatrix.from_scipy(total)


def _check_dims(dims):
    if isinstance(dims, (int, np.integer)):
        dims = (dims,)
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= 3:
        raise SliceEigError("grids must have 1 to 3 dimensions")
    if any(d < 1 for d in dims):
        raise SliceEigError(f"grid sizes must be positive, got {dims}")
    n = int(np.prod(dims, dtype=object))
    if n * (2 * len(dims) + 1) >= 2**31:
        raise SliceEigError(f"grid {dims} is too large")
    return dims


def laplacian_analytic_eigs(dims) -> np.ndarray:
    """All eigenvalues of `gen_laplacian(dims)` from the closed form, ascending."""
    dims = _check_dims(dims)
    if np.prod(dims) > MAX_ANALYTIC:
        raise SliceEigError(f"analytic enumeration limited to {MAX_ANALYTIC} eigenvalues")
    total = np.zeros(())
    for d in dims:
        i = np.arange(1, d + 1)
        lam = 4.0 * np.sin(i * np.pi / (2 * (d + 1))) ** 2
        total = np.add.outer(total, lam)
    return np.sort(total.ravel())


# -- MatrixMarket -------------------------------------------------------------

def read_matrix_market(path) -> CsrMatrix:
    """Read a real ``coordinate`` MatrixMarket file (symmetric or general).

    Symmetric storage is expanded to full; duplicate entries are summed.
    General files must be numerically symmetric.
    """
    path = Path(path)
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing '%%MatrixMarket' banner", 1)
    obj, fmt, fieldtype, symm = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"only 'matrix coordinate' is supported, got '{obj} {fmt}'", 1)
    if fieldtype not in ("real", "integer"):
        raise MatrixMarketError(f"field must be real, got '{fieldtype}'", 1)
    if symm not in ("symmetric", "general"):
        raise MatrixMarketError(f"symmetry must be symmetric or general, got '{symm}'", 1)

    k = 1
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip().startswith("%")):
        k += 1
    if k == len(lines):
        raise MatrixMarketError("missing size line", k)
    size = lines[k].split()
    try:
        nrows, ncols, nnz = (int(s) for s in size)
    except ValueError:
        raise MatrixMarketError(f"bad size line '{lines[k]}'", k + 1) from None
    if nrows != ncols:
        raise MatrixMarketError(f"matrix is not square ({nrows} x {ncols})", k + 1)
    if nrows < 1 or nnz < 0:
        raise MatrixMarketError("bad dimensions", k + 1)

    body_start = k + 1
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for ln in range(body_start, len(lines)):
        text = lines[ln].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"expected 'row col value', got '{text}'", ln + 1)
        if count >= nnz:
            raise MatrixMarketError(f"more than {nnz} entries", ln + 1)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{text}'", ln + 1) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range", ln + 1)
        if symm == "symmetric" and j > i:
            raise MatrixMarketError(f"symmetric storage expects lower triangle, got ({i}, {j})", ln + 1)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {count}", len(lines))

    if symm == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return CsrMatrix.from_triplets(nrows, rows, cols, vals)


def write_matrix_market(A: CsrMatrix, path):
    """Write `A` in symmetric lower-triangular coordinate form."""
    rows, cols, vals = A.triplets()
    lower = cols <= rows
    rows, cols, vals = rows[lower], cols[lower], vals[lower]
    order = np.lexsort((rows, cols))  # column-major, the usual MatrixMarket order
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{A.n} {A.n} {rows.size}\n")
        body = np.rec.fromarrays([rows[order] + 1, cols[order] + 1, vals[order]])
        np.savetxt(fh, body, fmt="%d %d %.17g")
