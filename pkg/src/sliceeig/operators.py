"""Operator and solver contracts with baseline implementations.

Any object with a ``matvec`` method, a dense/sparse matrix, or a plain
callable can serve as an operator. Solvers expose ``solve(v)``. The
baseline factorizations reorder with reverse Cuthill-McKee and factor in
envelope storage: Cholesky for SPD ``B`` and complex-symmetric LDL^T for
``A - sigma*B``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import _skyline
from .errors import DimensionError, FactorizationError, NotSPDError, SliceEigError
from .matrix import CsrMatrix


@dataclass
class Counters:
    """Operation and timing accumulators owned by one driver invocation."""

    niter: int = 0
    n_A_matvec: int = 0
    n_B_matvec: int = 0
    n_B_solve: int = 0
    n_shift_solve: int = 0
    t_mv: float = 0.0
    t_orth: float = 0.0
    t_sv: float = 0.0
    t_total: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)

    def add(self, other: "Counters"):
        for key, value in other.__dict__.items():
            setattr(self, key, getattr(self, key) + value)


@dataclass
class OperatorHandle:
    """A linear operator given by its action on vectors."""

    apply: Callable[[np.ndarray], np.ndarray]
    n: int
    symmetric: bool = True

    def matvec(self, x):
        return self.apply(x)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.apply(x)
        return np.column_stack([self.apply(x[:, j]) for j in range(x.shape[1])])


def as_operator(obj, n=None) -> OperatorHandle:
    """Wrap a matrix, operator-like object or callable as an `OperatorHandle`."""
    if isinstance(obj, OperatorHandle):
        return obj
    if isinstance(obj, CsrMatrix):
        return OperatorHandle(obj.matvec, obj.n)
    if sp.issparse(obj) or isinstance(obj, np.ndarray):
        # np.matrix products stay 2-D, so plain arrays only
        mat = obj if sp.issparse(obj) else np.asarray(obj)
        return OperatorHandle(lambda x: mat @ x, mat.shape[0])
    if hasattr(obj, "matvec"):
        size = n if n is not None else getattr(obj, "n", None) or obj.shape[0]
        return OperatorHandle(obj.matvec, int(size))
    if callable(obj):
        if n is None:
            raise DimensionError("operator size n is required for a bare callable")
        return OperatorHandle(obj, int(n))
    raise TypeError(f"cannot use {type(obj).__name__} as an operator")


def block_apply(obj, X):
    """``obj @ X`` for a block of columns, using a sparse product when available."""
    X = np.asarray(X)
    if isinstance(obj, CsrMatrix):
        return obj.to_scipy() @ X
    if sp.issparse(obj) or isinstance(obj, np.ndarray):
        return np.asarray(obj @ X)
    op = as_operator(obj, X.shape[0])
    return np.column_stack([op.apply(X[:, j]) for j in range(X.shape[1])])


def as_solver(obj):
    """Return a ``v -> B^{-1} v`` callable from a factor, approximation or callable."""
    if obj is None:
        return None
    if hasattr(obj, "solve"):
        return obj.solve
    if callable(obj):
        return obj
    raise TypeError(f"cannot use {type(obj).__name__} as a solver")


def _to_scipy(M):
    if isinstance(M, CsrMatrix):
        return M.to_scipy()
    if sp.issparse(M):
        return sp.csr_matrix(M)
    return sp.csr_matrix(np.asarray(M, dtype=float))


class _Envelope:
    """Permuted envelope LDL^T factor of a symmetric matrix."""

    def __init__(self, mat: sp.csr_matrix, perm, dtype):
        self.n = mat.shape[0]
        self.perm = perm
        self.iperm = np.empty_like(perm)
        self.iperm[perm] = np.arange(perm.size)
        pm = mat[perm][:, perm]
        lower = sp.tril(pm, format="csr")
        lower = lower + sp.diags(np.zeros(self.n, dtype=dtype), format="csr")
        lower.sum_duplicates()
        lower.sort_indices()
        self.first, self.ptr, self.vals = _skyline.build_envelope(lower, dtype)
        self.dtype = dtype
        self.failed = _skyline.ldlt_factor(self.first, self.ptr, self.vals)
        self.pivots = _skyline.pivots(self.ptr, self.vals)

    @property
    def envelope_size(self):
        return int(self.vals.size)

    def solve(self, b):
        x = np.asarray(b, dtype=self.dtype)[self.perm]
        y = _skyline.lower_solve(self.first, self.ptr, self.vals, x)
        y = y / self.pivots
        x = _skyline.upper_solve(self.first, self.ptr, self.vals, y)
        return x[self.iperm]


class SpdFactor:
    """Cholesky factorization ``B = G G^T`` with ``G = P^T L D^{1/2}``.

    ``L`` is the unit lower envelope factor of the RCM-permuted matrix.
    """

    def __init__(self, B):
        mat = _to_scipy(B)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionError("B must be square")
        self.n = mat.shape[0]
        perm = reverse_cuthill_mckee(sp.csr_matrix(mat), symmetric_mode=True).astype(np.int64)
        self._env = _Envelope(mat, perm, np.float64)
        piv = self._env.pivots
        bad = np.flatnonzero(~(piv > 0))
        if self._env.failed >= 0 or bad.size:
            k = int(bad[0]) if bad.size else self._env.failed
            raise NotSPDError(int(perm[k]), float(piv[k]))
        self._sqrt_d = np.sqrt(piv)

    def solve(self, v):
        """``B^{-1} v``."""
        return self._env.solve(np.asarray(v, dtype=float))

    def solve_L(self, v):
        """``G^{-1} v``."""
        e = self._env
        y = _skyline.lower_solve(e.first, e.ptr, e.vals, np.asarray(v, dtype=float)[e.perm])
        return y / self._sqrt_d

    def solve_LT(self, v):
        """``G^{-T} v``."""
        e = self._env
        y = _skyline.upper_solve(e.first, e.ptr, e.vals, np.asarray(v, dtype=float) / self._sqrt_d)
        return y[e.iperm]

    def mul_L(self, v):
        """``G v``."""
        e = self._env
        y = _skyline.lower_mul(e.first, e.ptr, e.vals, np.asarray(v) * self._sqrt_d)
        return y[e.iperm]

    def mul_LT(self, v):
        """``G^T v``."""
        e = self._env
        y = _skyline.upper_mul(e.first, e.ptr, e.vals, np.asarray(v)[e.perm])
        return y * self._sqrt_d


def factor_spd(B) -> SpdFactor:
    """Factor a symmetric positive definite matrix.

    Raises
    ------
    NotSPDError
        On the first non-positive pivot (reported in the original numbering).
    """
    return SpdFactor(B)


class ShiftedFactor:
    """Complex symmetric LDL^T of ``A - sigma*B`` for one pole ``sigma``."""

    def __init__(self, A, B, sigma):
        sigma = complex(sigma)
        if sigma.imag == 0:
            raise SliceEigError("shift must have a nonzero imaginary part")
        a = _to_scipy(A)
        b = sp.identity(a.shape[0], format="csr") if B is None else _to_scipy(B)
        if a.shape != b.shape:
            raise DimensionError("A and B must have the same shape")
        self.n = a.shape[0]
        self.sigma = sigma
        pattern = (abs(a) + abs(b)).tocsr()
        perm = reverse_cuthill_mckee(pattern, symmetric_mode=True).astype(np.int64)
        mat = (a.astype(np.complex128) - sigma * b).tocsr()
        self._env = _Envelope(mat, perm, np.complex128)
        if self._env.failed >= 0:
            raise FactorizationError(
                f"zero pivot at row {int(perm[self._env.failed])} factoring A - ({sigma})B"
            )

    def solve(self, v):
        """``(A - sigma B)^{-1} v`` for real or complex ``v``."""
        return self._env.solve(np.asarray(v, dtype=np.complex128))


def factor_shifted(A, B, sigma) -> ShiftedFactor:
    """Factor ``A - sigma*B`` (``B=None`` means identity) for a non-real ``sigma``."""
    return ShiftedFactor(A, B, sigma)


# -- least-squares Chebyshev approximations of B^{-1} and B^{-1/2} ------------

_TARGETS = {
    "inv": lambda t: 1.0 / t,
    "invsqrt": lambda t: 1.0 / np.sqrt(t),
}


@dataclass
class ChebApprox:
    """Chebyshev expansion ``sum_k coef[k] T_k((t - c)/h)`` approximating ``f(t)``."""

    target: str
    coef: np.ndarray
    lmin: float
    lmax: float
    error: float
    counters: Counters = field(default_factory=Counters, repr=False)

    @property
    def degree(self):
        return self.coef.size - 1

    @property
    def center(self):
        return 0.5 * (self.lmax + self.lmin)

    @property
    def half_width(self):
        return 0.5 * (self.lmax - self.lmin)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.degree == 0:
            return np.full_like(t, self.coef[0])
        return np.polynomial.chebyshev.chebval((t - self.center) / self.half_width, self.coef)


def ls_pol_approx(f, bounds, tol=1e-10, max_deg=200) -> ChebApprox:
    """Lowest-degree least-squares Chebyshev fit of ``t^-1`` or ``t^-1/2``.

    Coefficients come from a discrete least-squares fit on ``4*max_deg``
    Chebyshev points over ``[lmin, lmax]``; the degree is the smallest one
    whose relative max error on a 1000-point grid is at most ``tol``.

    Parameters
    ----------
    f : {"inv", "invsqrt"}
        Target function.
    bounds : (lmin, lmax) or SpectralBounds
        Interval enclosing the spectrum of ``B``; ``lmin > 0``.
    """
    if f not in _TARGETS:
        raise ValueError(f"unknown target {f!r}; use 'inv' or 'invsqrt'")
    lmin, lmax = _bounds_pair(bounds)
    if lmin <= 0:
        raise SliceEigError("bounds must be positive for an SPD matrix")
    func = _TARGETS[f]
    if lmax - lmin <= 1e-14 * lmax:
        value = float(func(0.5 * (lmin + lmax)))
        return ChebApprox(f, np.array([value]), lmin, lmax, 0.0)
    npts = 4 * max_deg
    x = np.cos(np.pi * (np.arange(npts) + 0.5) / npts)
    c, h = 0.5 * (lmax + lmin), 0.5 * (lmax - lmin)
    fx = func(c + h * x)
    # discrete orthogonality of T_k on Chebyshev points gives the LS solution
    k = np.arange(max_deg + 1)
    coef = (2.0 / npts) * (np.cos(np.outer(k, np.arccos(x))) @ fx)
    coef[0] *= 0.5
    grid = np.linspace(lmin, lmax, 1000)
    fg = func(grid)
    scale = np.abs(fg).max()
    tg = np.cos(np.outer(k, np.arccos(np.clip((grid - c) / h, -1, 1))))
    partial = np.cumsum(coef[:, None] * tg, axis=0)
    errors = np.abs(partial - fg).max(axis=1) / scale
    ok = np.flatnonzero(errors <= tol)
    if ok.size == 0:
        raise SliceEigError(
            f"degree {max_deg} reaches relative error {errors.min():.2e} > tol {tol:.1e}"
        )
    deg = int(ok[0])
    return ChebApprox(f, coef[: deg + 1].copy(), lmin, lmax, float(errors[deg]))


def apply_cheb(approx: ChebApprox, B_op, v, counters: Counters | None = None):
    """``p(B) v`` by the three-term Chebyshev recurrence (``degree`` products with B)."""
    B = as_operator(B_op, np.asarray(v).shape[0])
    v = np.asarray(v, dtype=float)
    coef = approx.coef
    if coef.size == 1:
        return coef[0] * v
    c, h = approx.center, approx.half_width
    t0 = time.perf_counter()
    prev = v
    cur = (B.apply(v) - c * v) / h
    out = coef[0] * prev + coef[1] * cur
    for k in range(2, coef.size):
        nxt = 2.0 * (B.apply(cur) - c * cur) / h - prev
        out += coef[k] * nxt
        prev, cur = cur, nxt
    if counters is not None:
        counters.n_B_matvec += coef.size - 1
        counters.t_sv += time.perf_counter() - t0
    return out


class ChebSolver:
    """``v -> p(B) v`` solver object built on a `ChebApprox`."""

    def __init__(self, approx: ChebApprox, B_op):
        self.approx = approx
        self.B = as_operator(B_op)

    def solve(self, v):
        return apply_cheb(self.approx, self.B, v)


def _bounds_pair(bounds):
    if hasattr(bounds, "lmin"):
        return float(bounds.lmin), float(bounds.lmax)
    lo, hi = bounds
    return float(lo), float(hi)
