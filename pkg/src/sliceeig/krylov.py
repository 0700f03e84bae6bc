"""Orthogonalization, Lanczos recurrences and spectral bound estimation.

All Lanczos variants share `LanczosEngine`, which runs the symmetric
recurrence for an operator ``F`` that is self-adjoint in the inner product
``<x, y>_G = x^T G y``. Each basis vector ``v`` travels with its image
``G v``; when ``G = I`` both are the same array. Full reorthogonalization
uses classical Gram-Schmidt with the DGKS second pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .matrix import TriDiag
from .operators import Counters, as_operator, as_solver
from .tridiag import sym_tridiag_eig

DGKS_ETA = 1.0 / np.sqrt(2.0)
BREAKDOWN_TOL = 1e-14
MAX_RESTART_ATTEMPTS = 3


@dataclass
class InnerProduct:
    """Euclidean (``B is None``) or B-weighted inner product.

    ``B_solve`` is needed by Lanczos on ``B^{-1} A``; plain orthogonalization
    only needs ``B``.
    """

    B: object = None
    B_solve: object = None

    @property
    def kind(self):
        return "euclidean" if self.B is None else "B-weighted"

    def image(self, v):
        """``G v`` (``v`` itself for the Euclidean product)."""
        if self.B is None:
            return v
        return as_operator(self.B, v.shape[0]).apply(v)

    def dot(self, x, y):
        return float(x @ self.image(y))

    def norm(self, x):
        return float(np.sqrt(max(self.dot(x, x), 0.0)))


@dataclass
class SpectralBounds:
    """Estimated interval ``[lmin, lmax]`` enclosing the spectrum."""

    lmin: float
    lmax: float

    def __post_init__(self):
        if not self.lmin < self.lmax:
            raise ValueError(f"need lmin < lmax, got [{self.lmin}, {self.lmax}]")

    def as_tuple(self):
        return (self.lmin, self.lmax)


@dataclass
class LanczosState:
    """Result of `lanczos_run`.

    ``Q`` holds the basis (G-orthonormal), ``Z`` the images ``G q`` (None
    for the Euclidean product), ``T`` the tridiagonal projection.
    """

    Q: np.ndarray
    Z: np.ndarray | None
    T: TriDiag
    m: int
    breakdown: bool
    beta_next: float
    q_next: np.ndarray | None


def cgs2_orthogonalize(v, Q, ip: InnerProduct | None = None, return_passes=False):
    """Orthogonalize ``v`` against the (ip-orthonormal) columns of ``Q``.

    Classical Gram-Schmidt; a second pass runs only when the first one
    shrinks the norm below ``1/sqrt(2)`` of its previous value (DGKS).

    Returns
    -------
    v_orth : ndarray
    norm : float
        ip-norm of ``v_orth``; exactly 0.0 when ``v`` lies in ``span(Q)``
        (breakdown signal).
    passes : int
        Only when ``return_passes`` is set.
    """
    ip = ip or InnerProduct()
    v = np.array(v, dtype=float)
    Q = np.asarray(Q, dtype=float).reshape(v.shape[0], -1)
    GQ = Q if ip.B is None else np.column_stack([ip.image(Q[:, j]) for j in range(Q.shape[1])])
    norm0 = ip.norm(v)
    start = norm0
    passes = 0
    norm = norm0
    while passes < 2:
        c = GQ.T @ v
        v -= Q @ c
        passes += 1
        norm = ip.norm(v)
        if norm >= DGKS_ETA * norm0:
            break
        norm0 = norm
    if norm <= 1e-12 * start:
        norm = 0.0
    if return_passes:
        return v, norm, passes
    return v, norm


class LanczosEngine:
    """Symmetric Lanczos with full reorthogonalization, locking and thick restart.

    Parameters
    ----------
    apply : callable
        ``(v, gv) -> (F v, G F v)``.
    n : int
        Vector length.
    cap : int
        Maximum basis dimension.
    generalized : bool
        Whether ``G`` differs from the identity (images stored separately).
    from_x : callable
        ``x -> (v, G v)``; maps a random vector into the basis space.
    rng : numpy.random.Generator
    counters : Counters
    resync : callable, optional
        ``(v, gv) -> (v, gv)`` rebuilding one member of the pair from the
        other after orthogonalization. Without it the pair drifts apart by
        rounding error divided by each new ``beta``.
    image_primary : bool
        Whether ``resync`` trusts ``gv`` (and rebuilds ``v``) rather than ``v``.
    """

    def __init__(self, apply, n, cap, generalized, from_x, rng, counters=None, resync=None,
                 image_primary=False):
        self.apply = apply
        self.resync = resync
        self.image_primary = image_primary
        self.n = n
        self.cap = cap
        self.gen = generalized
        self.from_x = from_x
        self.rng = rng
        self.counters = counters if counters is not None else Counters()
        self._alloc = 0
        self.V = self.GV = self.H = None
        self._grow(min(cap, 128))
        self.hnorm = 0.0
        self.k = 0          # current basis size (vectors with known H column)
        self.l = 0          # kept Ritz vectors at the front after a restart
        self.beta_next = 0.0
        self.U = np.zeros((n, 0))
        self.GU = self.U
        self.breakdown = False

    def _grow(self, size):
        """Make room for ``size`` basis vectors plus the next one."""
        size = min(max(size, 1), self.cap)
        if self.V is not None and size <= self._alloc:
            return
        V = np.zeros((self.n, size + 1), order="F")
        H = np.zeros((size + 1, size + 1))
        if self.V is not None:
            V[:, : self._alloc + 1] = self.V
            H[: self._alloc + 1, : self._alloc + 1] = self.H
        if self.gen:
            GV = np.zeros((self.n, size + 1), order="F")
            if self.GV is not None:
                GV[:, : self._alloc + 1] = self.GV
            self.GV = GV
        else:
            self.GV = V
        self.V, self.H, self._alloc = V, H, size

    # -- locked set -------------------------------------------------------
    def lock(self, u, gu):
        self.U = np.column_stack([self.U, u])
        self.GU = np.column_stack([self.GU, gu]) if self.gen else self.U

    @property
    def n_locked(self):
        return self.U.shape[1]

    # -- orthogonalization ------------------------------------------------
    def _orth(self, r, gr, upto):
        t0 = time.perf_counter()
        blocks = []
        if self.U.shape[1]:
            blocks.append((self.U, self.GU))
        if upto:
            blocks.append((self.V[:, :upto], self.GV[:, :upto]))
        norm0 = np.sqrt(max(r @ gr, 0.0))
        norm = norm0
        for _ in range(2):
            for Q, GQ in blocks:
                c = Q.T @ gr if self.image_primary or not self.gen else GQ.T @ r
                r -= Q @ c
                if self.gen:
                    gr -= GQ @ c
            norm = np.sqrt(max(r @ gr, 0.0))
            if norm >= DGKS_ETA * norm0:
                break
            norm0 = norm
        if self.resync is not None:
            r, gr = self.resync(r, gr)
            r, gr = np.asarray(r, dtype=float), np.asarray(gr, dtype=float)
            norm = np.sqrt(max(r @ gr, 0.0))
        self.counters.t_orth += time.perf_counter() - t0
        return r, gr, norm

    def _random_vector(self, upto):
        """Fresh random direction G-orthonormal to the locked set and basis."""
        for _ in range(MAX_RESTART_ATTEMPTS):
            v, gv = self.from_x(self.rng.standard_normal(self.n))
            v, gv = np.array(v, dtype=float), np.array(gv, dtype=float)
            if not self.gen:
                gv = v
            scale = np.sqrt(max(v @ gv, 0.0))
            v, gv, norm = self._orth(v, gv, upto)
            if norm > 1e-8 * scale:
                return v / norm, (gv / norm if self.gen else v / norm)
        return None, None

    # -- start / restart --------------------------------------------------
    def start(self, v=None, gv=None):
        """Reset the basis to a single start vector (random when omitted)."""
        self.k = 0
        self.l = 0
        self.H[:] = 0.0
        self.breakdown = False
        if v is None:
            v, gv = self._random_vector(0)
            if v is None:
                self.breakdown = True
                return False
        else:
            v = np.array(v, dtype=float)
            gv = v if not self.gen else np.array(gv, dtype=float)
            if self.U.shape[1]:
                v, gv, _ = self._orth(v, gv, 0)
            nrm = np.sqrt(max(v @ gv, 0.0))
            v = v / nrm
            gv = gv / nrm if self.gen else v
        self.V[:, 0] = v
        if self.gen:
            self.GV[:, 0] = gv
        return True

    def thick_restart(self, S, theta):
        """Keep Ritz vectors ``V S`` (values ``theta``) plus the next Lanczos vector."""
        k, l = self.k, S.shape[1]
        last = self.V[:, k].copy()
        glast = self.GV[:, k].copy() if self.gen else last
        coupling = self.beta_next * S[k - 1, :]
        if l:
            self.V[:, :l] = self.V[:, :k] @ S
            if self.gen:
                self.GV[:, :l] = self.GV[:, :k] @ S
        self.H[:] = 0.0
        self.H[np.arange(l), np.arange(l)] = theta
        self.H[:l, l] = coupling
        self.H[l, :l] = coupling
        self.V[:, l] = last
        if self.gen:
            self.GV[:, l] = glast
        self.k = l
        self.l = l
        if self.breakdown:
            # the stored next vector is meaningless; replace it
            v, gv = self._random_vector(l)
            if v is None:
                return False
            self.V[:, l] = v
            if self.gen:
                self.GV[:, l] = gv
            self.H[:l, l] = 0.0
            self.H[l, :l] = 0.0
            self.breakdown = False
        # the carried vector must stay orthogonal to a grown locked set
        if self.U.shape[1]:
            v, gv, norm = self._orth(self.V[:, l].copy(), self.GV[:, l].copy(), l)
            if norm <= 1e-8:
                v, gv = self._random_vector(l)
                if v is None:
                    return False
                norm = 1.0
                self.H[:l, l] = 0.0
                self.H[l, :l] = 0.0
            self.V[:, l] = v / norm
            if self.gen:
                self.GV[:, l] = gv / norm
        return True

    # -- one Lanczos step -------------------------------------------------
    def step(self):
        """Extend the basis by one vector. Returns False when the space is exhausted."""
        k = self.k
        if k >= self.cap:
            return False
        if k + 1 > self._alloc:
            self._grow(2 * self._alloc)
        v = self.V[:, k]
        gv = self.GV[:, k]
        f, gf = self.apply(v, gv)
        r = np.array(f, dtype=float)
        gr = np.array(gf, dtype=float) if self.gen else r
        if k == self.l and self.l > 0:
            s = self.H[: self.l, k]
            r -= self.V[:, : self.l] @ s
            if self.gen:
                gr -= self.GV[:, : self.l] @ s
        elif k > self.l:
            b = self.H[k - 1, k]
            r -= b * self.V[:, k - 1]
            if self.gen:
                gr -= b * self.GV[:, k - 1]
        alpha = float(v @ gr)
        r -= alpha * v
        if self.gen:
            gr -= alpha * gv
        r, gr, beta = self._orth(r, gr, k + 1)
        self.H[k, k] = alpha
        self.k = k + 1
        self.counters.niter += 1
        self.hnorm = max(self.hnorm, abs(alpha), beta)
        if beta <= BREAKDOWN_TOL * max(self.hnorm, 1e-300):
            # invariant subspace: continue with a fresh direction, decoupled
            self.breakdown = True
            self.beta_next = 0.0
            if self.k >= self.cap:
                return True
            nv, ngv = self._random_vector(self.k)
            if nv is None:
                return False
            self.V[:, self.k] = nv
            if self.gen:
                self.GV[:, self.k] = ngv
            self.breakdown = False
            return True
        self.beta_next = beta
        self.V[:, k + 1] = r / beta
        if self.gen:
            self.GV[:, k + 1] = gr / beta
        if k + 1 <= self.cap:
            self.H[k, k + 1] = beta
            self.H[k + 1, k] = beta
        return True

    # -- projected problem ------------------------------------------------
    def projected(self):
        k = self.k
        return self.H[:k, :k]

    def tridiagonal(self):
        """The projection as a `TriDiag` (valid when no restart has happened)."""
        k = self.k
        return TriDiag(np.diag(self.H[:k, :k]).copy(), np.diag(self.H[:k, :k], 1).copy())

    def ritz(self, want_vectors=True):
        """Eigenpairs of the projected matrix, ascending."""
        if self.l == 0:
            return sym_tridiag_eig(self.tridiagonal(), want_vectors)
        if want_vectors:
            return np.linalg.eigh(self.projected())
        return np.linalg.eigvalsh(self.projected()), None


def lanczos_run(op, ip: InnerProduct | None, start, m, reorth="full", counters=None) -> LanczosState:
    """``m`` steps of Lanczos on ``op`` (or ``B^{-1} op`` for a B-weighted ip).

    The generalized variant keeps ``z_j = B w_j`` alongside the
    B-orthonormal basis so inner products never multiply by ``B``.
    Stops early (``breakdown=True``) when the Krylov space becomes invariant.
    """
    if reorth != "full":
        raise ValueError("only full reorthogonalization is supported")
    ip = ip or InnerProduct()
    start = np.asarray(start, dtype=float)
    n = start.shape[0]
    A = as_operator(op, n)
    counters = counters if counters is not None else Counters()
    gen = ip.B is not None
    if gen:
        Bop = as_operator(ip.B, n)
        solve = as_solver(ip.B_solve)
        if solve is None:
            raise ValueError("B-weighted Lanczos needs B_solve")

        def apply(v, gv):
            av = A.apply(v)
            counters.n_A_matvec += 1
            counters.n_B_solve += 1
            return solve(av), av

        zstart = Bop.apply(start)
        counters.n_B_matvec += 1

        def resync(v, gv):
            counters.n_B_matvec += 1
            return v, Bop.apply(v)
    else:
        resync = None

        def apply(v, gv):
            counters.n_A_matvec += 1
            return A.apply(v), None

        zstart = start
    if start.shape[0] != A.n:
        raise DimensionError("start vector length does not match the operator")
    m = int(min(m, n))
    eng = LanczosEngine(apply, n, m, gen, from_x=None, rng=None, counters=counters, resync=resync)
    eng._grow(m)
    eng.start(start, zstart)
    breakdown = False
    for _ in range(m):
        k = eng.k
        v = eng.V[:, k]
        f, gf = apply(v, eng.GV[:, k])
        r = np.array(f, dtype=float)
        gr = np.array(gf, dtype=float) if gen else r
        if k:
            b = eng.H[k - 1, k]
            r -= b * eng.V[:, k - 1]
            if gen:
                gr -= b * eng.GV[:, k - 1]
        alpha = float(v @ gr)
        r -= alpha * v
        if gen:
            gr -= alpha * eng.GV[:, k]
        r, gr, beta = eng._orth(r, gr, k + 1)
        eng.H[k, k] = alpha
        eng.k = k + 1
        counters.niter += 1
        eng.beta_next = beta
        if beta <= BREAKDOWN_TOL:
            breakdown = eng.k < m or beta == 0.0
            eng.beta_next = 0.0
            break
        eng.V[:, k + 1] = r / beta
        if gen:
            eng.GV[:, k + 1] = gr / beta
        if k + 1 < m:
            eng.H[k, k + 1] = eng.H[k + 1, k] = beta
    k = eng.k
    has_next = eng.beta_next > 0
    return LanczosState(
        Q=eng.V[:, :k].copy(),
        Z=eng.GV[:, :k].copy() if gen else None,
        T=eng.tridiagonal(),
        m=k,
        breakdown=breakdown,
        beta_next=float(eng.beta_next),
        q_next=eng.V[:, k].copy() if has_next else None,
    )


def _bounds_operator(op, ip, n, counters):
    A = as_operator(op, n)
    gen = ip is not None and ip.B is not None
    if not gen:
        def apply(v, gv):
            counters.n_A_matvec += 1
            return A.apply(v), None

        return apply, (lambda x: (x, x)), False, None
    Bop = as_operator(ip.B, n)
    solve = as_solver(ip.B_solve)

    def apply(v, gv):
        av = A.apply(v)
        counters.n_A_matvec += 1
        counters.n_B_solve += 1
        return solve(av), av

    def from_x(x):
        counters.n_B_matvec += 1
        return x, Bop.apply(x)

    return apply, from_x, True, lambda v, gv: from_x(v)


def _enclose(lo, hi, pad_lo, pad_hi):
    # a relative floor covers Ritz values that are exact up to rounding
    floor = 1e-10 * max(abs(lo), abs(hi))
    lmin, lmax = lo - max(pad_lo, floor), hi + max(pad_hi, floor)
    if not lmin < lmax:
        width = max(1e-8 * max(abs(lo), abs(hi)), 1e-12)
        lmin, lmax = lmin - width, lmax + width
    return SpectralBounds(float(lmin), float(lmax))


def lan_bounds(op, ip: InnerProduct | None = None, maxit=50, n=None, seed=0, counters=None) -> SpectralBounds:
    """Cheap bounds from one Lanczos run of ``maxit`` steps.

    Extreme Ritz values are widened by their residual norms
    ``beta_{m+1} |y_m|``.
    """
    n = n or as_operator(op).n
    counters = counters if counters is not None else Counters()
    apply, from_x, gen, resync = _bounds_operator(op, ip, n, counters)
    rng = np.random.default_rng(seed)
    m = int(min(maxit, n))
    eng = LanczosEngine(apply, n, m, gen, from_x, rng, counters, resync)
    eng.start()
    while eng.k < m and eng.step():
        pass
    theta, Y = eng.ritz(True)
    res = eng.beta_next * np.abs(Y[-1, :])
    return _enclose(theta[0], theta[-1], res[0], res[-1])


def lan_tr_bounds(op, ip: InnerProduct | None = None, tol=1e-8, restart_dim=50, n=None, seed=0,
                  max_restarts=100, counters=None) -> SpectralBounds:
    """Bounds from thick-restart Lanczos converging both extreme Ritz values.

    Restarts keep the outermost Ritz vectors at each end until the extreme
    Ritz values change by less than ``tol`` (relative) between cycles; the
    result is then widened by the residual norms of the extreme pairs.
    """
    n = n or as_operator(op).n
    counters = counters if counters is not None else Counters()
    apply, from_x, gen, resync = _bounds_operator(op, ip, n, counters)
    rng = np.random.default_rng(seed)
    m = int(min(restart_dim, n))
    keep = max(1, m // 6)
    eng = LanczosEngine(apply, n, m, gen, from_x, rng, counters, resync)
    eng.start()
    prev = None
    theta = res = None
    for _ in range(max_restarts):
        while eng.k < m and eng.step():
            pass
        theta, Y = eng.ritz(True)
        res = eng.beta_next * np.abs(Y[-1, :])
        ends = np.array([theta[0], theta[-1]])
        scale = max(np.abs(ends).max(), 1e-300)
        if eng.k < m or eng.beta_next == 0.0:
            break
        if prev is not None and np.abs(ends - prev).max() <= tol * scale:
            break
        prev = ends
        if theta.size <= 2 * keep:
            idx = np.arange(theta.size)
        else:
            idx = np.concatenate([np.arange(keep), np.arange(theta.size - keep, theta.size)])
        eng.thick_restart(Y[:, idx], theta[idx])
    return _enclose(theta[0], theta[-1], res[0], res[-1])
