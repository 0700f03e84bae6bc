"""Filtered Lanczos and subspace-iteration drivers for one spectral slice.

Every Lanczos driver runs `LanczosEngine` on a filtered operator ``F``
that is self-adjoint in ``<x, y>_G``:

==================  =======================  ==========  =================
problem             F                        G           eigenvector
==================  =======================  ==========  =================
standard, poly      rho(A_hat)               I           v
standard, rational  rho(A)                   I           v
generalized, poly   rho(B^{-1} A_hat)        B           v
generalized, rat.   B rho(B^{-1}A) B^{-1}    B^{-1}      G v
==================  =======================  ==========  =================

Converged Ritz pairs are locked; later iterations are orthogonalized
against them, which is the explicit deflation ``(I - B U U^T)``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SliceEigError, SubspaceTooSmallError
from .krylov import LanczosEngine
from .operators import (Counters, OperatorHandle, SpdFactor, as_operator, as_solver, block_apply,
                        factor_shifted)
from .polyfilter import PolynomialFilter, apply_pol, apply_pol_pair
from .ratfilter import RationalFilter, apply_rat, apply_rat_pair

# candidates are Ritz values above this fraction of the bar, so pairs
# still climbing toward the bar are residual-checked rather than missed
CANDIDATE_FRACTION = 0.9
# a Ritz vector whose filtered-operator residual is below this fraction of
# res_tol has converged for the filter even if it is no eigenvector of A
FILTER_TOL_FACTOR = 1e-2


@dataclass
class SolverConfig:
    """Driver parameters; ``None`` fields are derived from ``est_count``.

    ``m`` is the restart dimension (TR drivers) or the basis cap (NR
    drivers). ``residual_mode="scaled"`` relaxes the test to
    ``r <= res_tol * max(1, |lambda|) * ||A||_1``.
    """

    m: int | None = None
    max_its: int | None = None
    ncycle: int = 30
    tau1: float | None = None
    res_tol: float = 1e-8
    seed: int = 0
    est_count: int | None = None
    residual_mode: str = "absolute"

    def __post_init__(self):
        if self.m is not None and self.m < 4:
            raise ValueError("m must be at least 4")
        if self.ncycle < 1:
            raise ValueError("ncycle must be at least 1")
        if not self.res_tol > 0:
            raise ValueError("res_tol must be positive")
        if self.residual_mode not in ("absolute", "scaled"):
            raise ValueError("residual_mode is 'absolute' or 'scaled'")

    def restart_dim(self, n):
        est = self.est_count if self.est_count is not None else 50
        m = self.m if self.m is not None else max(4 * est, 80)
        return int(min(m, n))

    def iteration_cap(self):
        est = self.est_count if self.est_count is not None else 50
        return int(self.max_its if self.max_its is not None else 40 * est + 300)

    def stagnation_tol(self, tnew):
        if self.tau1 is not None:
            return self.tau1
        return max(1e-12, 1e-10 * abs(tnew))


@dataclass
class RitzPair:
    theta: float
    lam: float
    u: np.ndarray
    residual: float


@dataclass
class DeflationSet:
    """Locked eigenvectors (columns of ``U``, B-orthonormal when generalized) and values."""

    U: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, 0)), np.zeros(0))

    @property
    def count(self):
        return self.values.size

    def add(self, u, lam):
        self.U = np.column_stack([self.U, u])
        self.values = np.append(self.values, lam)


@dataclass
class EigenResults:
    """Eigenpairs of one slice, ascending, with residual norms and counters."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    counters: Counters
    interval: tuple
    converged: bool = True
    message: str = ""
    solver: str = ""

    @property
    def count(self):
        return self.eigenvalues.size

    def summary(self, slice_index=None):
        out = {
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "counters": self.counters.as_dict(),
            "interval": list(self.interval),
            "converged": self.converged,
            "solver": self.solver,
        }
        if slice_index is not None:
            out["slice"] = slice_index
        if self.message:
            out["message"] = self.message
        return out


def rayleigh_and_residual(A, u, B=None, counters: Counters | None = None):
    """Rayleigh quotient ``u^T A u / u^T B u`` and residual ``||A u - lambda B u||_2``."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise SliceEigError("Rayleigh quotient of the zero vector")
    Aop = as_operator(A, u.shape[0])
    t0 = time.perf_counter()
    au = Aop.apply(u)
    if B is None:
        bu = u
    else:
        bu = as_operator(B, u.shape[0]).apply(u)
    if counters is not None:
        counters.n_A_matvec += 1
        counters.n_B_matvec += B is not None
        counters.t_mv += time.perf_counter() - t0
    lam = float(u @ au) / float(u @ bu)
    return lam, float(np.linalg.norm(au - lam * bu))


class StdFormOperator(OperatorHandle):
    """``G^{-1} A G^{-T}`` for ``B = G G^T``; eigenvectors map back by ``x = G^{-T} y``."""

    def __init__(self, A, factor: SpdFactor):
        Aop = as_operator(A)
        self.factor = factor
        super().__init__(lambda v: factor.solve_L(Aop.apply(factor.solve_LT(v))), Aop.n)

    def back(self, Y):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            return self.factor.solve_LT(Y)
        return np.column_stack([self.factor.solve_LT(Y[:, j]) for j in range(Y.shape[1])])


def transform_with_cholesky(A, B=None, factor: SpdFactor | None = None) -> StdFormOperator:
    """Standard-form operator of the pencil ``(A, B)`` through a Cholesky factor of ``B``."""
    if factor is None:
        if B is None:
            raise SliceEigError("need B or its factor")
        factor = SpdFactor(B)
    return StdFormOperator(A, factor)


# -- filtered problems --------------------------------------------------------


class _Problem:
    """Filtered operator in basis space plus maps to and from eigenvector space."""

    def __init__(self, A, B, counters):
        self.A_raw = A
        self.A = as_operator(A)
        self.n = self.A.n
        self.B_raw = B
        self.B = None if B is None else as_operator(B, self.n)
        self.counters = counters
        self.gen = False
        self.image_primary = False

    def _bmul(self, x):
        t0 = time.perf_counter()
        y = self.B.apply(x)
        self.counters.n_B_matvec += 1
        self.counters.t_mv += time.perf_counter() - t0
        return y

    def from_x(self, x):
        return x, x

    def to_x(self, v, gv):
        return v

    def apply(self, v, gv):
        raise NotImplementedError


class _PolyProblem(_Problem):
    def __init__(self, A, B, B_solve, filt, counters):
        super().__init__(A, B, counters)
        self.filt = filt
        self.gen = B is not None
        if self.gen:
            self.solve = as_solver(B_solve)
            if self.solve is None:
                self.solve = SpdFactor(B).solve

    def apply(self, v, gv):
        if not self.gen:
            return apply_pol(self.filt, self.A, v, counters=self.counters), None
        t, s = apply_pol_pair(self.filt, self.A, self.solve, gv, v, self.counters)
        return s, t

    def from_x(self, x):
        return (x, self._bmul(x)) if self.gen else (x, x)

    def resync(self, v, gv):
        return v, self._bmul(v)


class _RatProblem(_Problem):
    def __init__(self, A, B, solvers, filt, counters):
        super().__init__(A, B, counters)
        self.filt = filt
        self.gen = B is not None
        # the basis vector is B z; the eigenvector-space image z is trusted
        self.image_primary = True
        if solvers is None:
            solvers = [factor_shifted(A, B, s) for s in filt.shifts()]
        self.solvers = list(solvers)

    def apply(self, v, gv):
        if not self.gen:
            return apply_rat(self.filt, self.solvers, None, v, self.counters), None
        return apply_rat_pair(self.filt, self.solvers, self.B, v, gv, self.counters)

    def from_x(self, x):
        # basis vector w = B z with z the eigenvector-space vector
        return (self._bmul(x), x) if self.gen else (x, x)

    def to_x(self, v, gv):
        return gv if self.gen else v

    def resync(self, v, gv):
        return self._bmul(gv), gv


def _preload(eng, prob, deflate: DeflationSet | None):
    if deflate is None:
        return
    for j in range(deflate.count):
        x = deflate.U[:, j]
        if not prob.gen:
            eng.lock(x, x)
        elif isinstance(prob, _RatProblem):
            eng.lock(prob._bmul(x), x)
        else:
            eng.lock(x, prob._bmul(x))


class _Extractor:
    """Rayleigh quotients, interval and residual tests for Ritz candidates."""

    def __init__(self, prob, interval, cfg, bar):
        self.prob = prob
        self.xi, self.eta = interval
        self.cfg = cfg
        self.bar = bar
        slack = 10 * cfg.res_tol
        self.lo = self.xi - slack * max(1.0, abs(self.xi))
        self.hi = self.eta + slack * max(1.0, abs(self.eta))
        self.anorm = None
        if cfg.residual_mode == "scaled":
            self.anorm = _norm1_estimate(prob.A_raw)

    def tol(self, lam):
        if self.anorm is None:
            return self.cfg.res_tol
        return self.cfg.res_tol * max(1.0, abs(lam)) * self.anorm

    def inside(self, lam):
        return self.lo <= lam <= self.hi

    def pair(self, eng, y, theta):
        k = eng.k
        v = eng.V[:, :k] @ y
        gv = eng.GV[:, :k] @ y if eng.gen else v
        x = self.prob.to_x(v, gv)
        lam, res = rayleigh_and_residual(self.prob.A, x, self.prob.B, self.prob.counters)
        return RitzPair(float(theta), lam, x, res), v, gv


def _norm1_estimate(A):
    if hasattr(A, "norm1"):
        return float(A.norm1())
    if hasattr(A, "tocsc"):
        return float(abs(A).sum(axis=0).max())
    # power iteration on a matrix-free operator (2-norm, close enough for scaling)
    op = as_operator(A)
    x = np.random.default_rng(0).standard_normal(op.n)
    for _ in range(20):
        y = op.apply(x / np.linalg.norm(x))
        x = y
    return float(np.linalg.norm(x))


def _new_engine(prob, cap, cfg, counters):
    rng = np.random.default_rng(cfg.seed)
    resync = prob.resync if prob.gen else None
    return LanczosEngine(prob.apply, prob.n, cap, prob.gen, prob.from_x, rng, counters, resync,
                         prob.image_primary)


def _finish(found, interval, counters, t0, converged, message, solver):
    counters.t_total += time.perf_counter() - t0
    if found:
        order = np.argsort([p.lam for p in found])
        lams = np.array([found[i].lam for i in order])
        vecs = np.column_stack([found[i].u for i in order])
        res = np.array([found[i].residual for i in order])
    else:
        lams = np.zeros(0)
        vecs = np.zeros((0, 0))
        res = np.zeros(0)
    if not converged:
        warnings.warn(f"{solver}: {message}", RuntimeWarning, stacklevel=3)
    return EigenResults(lams, vecs, res, counters, tuple(interval), converged, message, solver)


def _trace(theta, bar):
    return float(np.sum(theta[theta >= bar]))


def _lanczos_nr(prob, bar, interval, cfg, deflate, solver):
    """Non-restarted filtered Lanczos with locking.

    Each pass starts from a fresh random vector orthogonal to everything
    locked so far; passes repeat until one locks nothing new, which picks
    up further copies of multiple eigenvalues.
    """
    t0 = time.perf_counter()
    counters = prob.counters
    n_free = prob.n - (deflate.count if deflate else 0)
    max_its = cfg.iteration_cap()
    ext = _Extractor(prob, interval, cfg, bar)
    found = []
    pending = _Pending(prob)
    eng = _new_engine(prob, max(1, min(n_free, max_its)), cfg, counters)
    _preload(eng, prob, deflate)
    converged, message = True, ""
    while True:
        cap = min(prob.n - eng.n_locked, max_its - counters.niter)
        if cap <= 0:
            if prob.n - eng.n_locked > 0:
                converged, message = False, "MaxIts reached"
            break
        eng.cap = cap
        if not eng.start():
            break
        tnew = math.nan
        gated = False
        while eng.k < cap:
            if not eng.step():
                break
            if eng.k % cfg.ncycle and eng.k < cap:
                continue
            theta, _ = eng.ritz(False)
            told, tnew = tnew, _trace(theta, bar)
            if not abs(tnew - told) < cfg.stagnation_tol(tnew):
                continue
            # the trace settled: stop once every wanted candidate has converged
            gated = True
            _, _, rows = _classify(eng, ext, bar)
            if all(r[4] != "open" for r in rows):
                break
        _, _, rows = _classify(eng, ext, bar)
        new = _settle(eng, ext, rows, found, pending)
        if counters.niter >= max_its and not gated:
            converged, message = False, "MaxIts reached with unconverged candidates"
            break
        if new == 0:
            break
    if pending.count and converged:
        converged, message = False, f"{pending.count} vectors of shared filter values unresolved"
    return _finish(found, interval, counters, t0, converged, message, solver)


class _Pending:
    """Filter-converged Ritz vectors that are not eigenvectors of ``(A, B)``.

    Distinct eigenvalues can share a filter value (an even filter on a
    symmetric spectrum does this exactly), and Lanczos then only sees one
    mixture per shared value. Such vectors are locked like converged ones so
    later passes contribute the rest of the shared space; Rayleigh-Ritz
    with ``(A, B)`` on their span separates the eigenpairs.
    """

    def __init__(self, prob):
        self.prob = prob
        self.X = np.zeros((prob.n, 0))

    @property
    def count(self):
        return self.X.shape[1]

    def add(self, x):
        self.X = np.column_stack([self.X, x])

    def resolve(self, ext, found):
        q = self.count
        if q == 0:
            return
        prob, X = self.prob, self.X
        t0 = time.perf_counter()
        AX = block_apply(prob.A_raw, X)
        prob.counters.n_A_matvec += q
        if prob.B is None:
            BX = X
        else:
            BX = block_apply(prob.B_raw, X)
            prob.counters.n_B_matvec += q
        prob.counters.t_mv += time.perf_counter() - t0
        Ap, Bp = X.T @ AX, X.T @ BX
        lam, Y = sla.eigh(0.5 * (Ap + Ap.T), 0.5 * (Bp + Bp.T))
        Xr = X @ Y
        res = np.linalg.norm(AX @ Y - (BX @ Y) * lam, axis=0)
        done = [j for j in range(q) if res[j] <= ext.tol(lam[j])]
        for j in done:
            if ext.inside(lam[j]):
                found.append(RitzPair(math.nan, float(lam[j]), Xr[:, j], float(res[j])))
        self.X = np.delete(Xr, done, axis=1)


def _classify(eng, ext, bar):
    """Ritz candidates inside the interval, tagged ``lock``, ``mix`` or ``open``.

    ``lock``: residual test passed. ``mix``: above the bar and converged
    for the filtered operator only. ``open``: above the bar, unconverged.
    """
    theta, Y = eng.ritz(True)
    ftol = FILTER_TOL_FACTOR * ext.cfg.res_tol
    rows = []
    for i in np.flatnonzero(theta >= CANDIDATE_FRACTION * bar)[::-1]:
        p, v, gv = ext.pair(eng, Y[:, i], theta[i])
        if not ext.inside(p.lam):
            continue
        if p.residual <= ext.tol(p.lam):
            kind = "lock"
        elif theta[i] < bar:
            # below the bar an in-interval quotient usually comes from a
            # mix of eigenvectors on both sides of the interval
            continue
        elif abs(eng.beta_next * Y[eng.k - 1, i]) <= ftol * max(1.0, abs(theta[i])):
            kind = "mix"
        else:
            kind = "open"
        rows.append((i, p, v, gv, kind))
    return theta, Y, rows


def _settle(eng, ext, rows, found, pending):
    """Lock converged pairs and mixtures; returns how many vectors were locked."""
    new = 0
    for _, p, v, gv, kind in rows:
        if kind == "open":
            continue
        if kind == "lock":
            found.append(p)
        else:
            pending.add(p.u)
        eng.lock(v, gv)
        new += 1
    pending.resolve(ext, found)
    return new


def _lanczos_tr(prob, bar, interval, cfg, deflate, solver):
    """Thick-restart filtered Lanczos with locking.

    A cycle runs to dimension ``m`` (or stops early when the trace of Ritz
    values above the bar settles). Converged in-interval candidates are
    locked, the rest (at most ``m/2``) are kept for the restart. After a
    cycle without candidates one more restart runs from a fresh random
    vector; a second empty cycle ends the run.
    """
    t0 = time.perf_counter()
    counters = prob.counters
    m = cfg.restart_dim(prob.n)
    max_its = cfg.iteration_cap()
    ext = _Extractor(prob, interval, cfg, bar)
    found = []
    pending = _Pending(prob)
    eng = _new_engine(prob, m, cfg, counters)
    _preload(eng, prob, deflate)
    converged, message = True, ""
    empty = 0
    if prob.n - eng.n_locked <= 0 or not eng.start():
        return _finish(found, interval, counters, t0, True, "", solver)
    while True:
        room = prob.n - eng.n_locked
        eng.cap = max(1, min(m, room))
        tnew = math.nan
        steps = 0
        while eng.k < eng.cap and counters.niter < max_its:
            if not eng.step():
                break
            steps += 1
            if steps % cfg.ncycle:
                continue
            theta, _ = eng.ritz(False)
            told, tnew = tnew, _trace(theta, bar)
            if abs(tnew - told) < cfg.stagnation_tol(tnew):
                break
        theta, Y, rows = _classify(eng, ext, bar)
        n_new = _settle(eng, ext, rows, found, pending)
        keep = [r[0] for r in rows if r[4] == "open"][: max(1, eng.cap // 2)]
        if n_new == 0 and not keep:
            empty += 1
        else:
            empty = 0
        exhausted = eng.k >= room
        if empty >= 2 or (exhausted and not keep):
            break
        if counters.niter >= max_its:
            converged = not keep
            message = "" if converged else "MaxIts reached with unconverged candidates"
            break
        if empty == 1 or exhausted:
            # extra restart from a fresh direction, deflated against the locked set
            if prob.n - eng.n_locked <= 0 or not eng.start():
                break
            continue
        keep = np.array(sorted(keep), dtype=int)
        if not eng.thick_restart(Y[:, keep] if keep.size else np.zeros((eng.k, 0)), theta[keep]):
            break
    if pending.count and converged:
        converged, message = False, f"{pending.count} vectors of shared filter values unresolved"
    return _finish(found, interval, counters, t0, converged, message, solver)


# -- public drivers -----------------------------------------------------------


def _check_interval(interval):
    xi, eta = float(interval[0]), float(interval[1])
    if not xi < eta:
        raise SliceEigError(f"degenerate interval [{xi}, {eta}]")
    return xi, eta


def cheb_lan_nr(A, filt: PolynomialFilter, interval, cfg: SolverConfig | None = None, *, B=None,
                B_solve=None, deflate: DeflationSet | None = None) -> EigenResults:
    """Polynomial-filtered Lanczos without restarts.

    For a pencil, ``B_solve`` applies ``B^{-1}`` (a factor's ``solve`` or an
    lsPol approximation); it defaults to a Cholesky factorization of ``B``.
    """
    cfg = cfg or SolverConfig()
    prob = _PolyProblem(A, B, B_solve, filt, Counters())
    return _lanczos_nr(prob, filt.bar, _check_interval(interval), cfg, deflate, "cheb_lan_nr")


def cheb_lan_tr(A, filt: PolynomialFilter, interval, cfg: SolverConfig | None = None, *, B=None,
                B_solve=None, deflate: DeflationSet | None = None) -> EigenResults:
    """Polynomial-filtered thick-restart Lanczos with locking."""
    cfg = cfg or SolverConfig()
    prob = _PolyProblem(A, B, B_solve, filt, Counters())
    return _lanczos_tr(prob, filt.bar, _check_interval(interval), cfg, deflate, "cheb_lan_tr")


def rat_lan_nr(A, filt: RationalFilter, interval, cfg: SolverConfig | None = None, *, B=None,
               solvers=None, deflate: DeflationSet | None = None) -> EigenResults:
    """Rational-filtered Lanczos without restarts.

    ``solvers`` holds one ``A - sigma_j B`` solver per pole (factored on
    demand when omitted).
    """
    cfg = cfg or SolverConfig()
    prob = _RatProblem(A, B, solvers, filt, Counters())
    return _lanczos_nr(prob, filt.bar, _check_interval(interval), cfg, deflate, "rat_lan_nr")


def rat_lan_tr(A, filt: RationalFilter, interval, cfg: SolverConfig | None = None, *, B=None,
               solvers=None, deflate: DeflationSet | None = None) -> EigenResults:
    """Rational-filtered thick-restart Lanczos with locking."""
    cfg = cfg or SolverConfig()
    prob = _RatProblem(A, B, solvers, filt, Counters())
    return _lanczos_tr(prob, filt.bar, _check_interval(interval), cfg, deflate, "rat_lan_tr")


def subspace_dim(est_count):
    return int(math.ceil(1.3 * est_count)) + 8


def cheb_si(A, filt: PolynomialFilter, interval, est_count, cfg: SolverConfig | None = None, *,
            B=None, B_solve=None) -> EigenResults:
    """Polynomial-filtered subspace iteration with Rayleigh-Ritz on ``(A, B)``.

    The block has ``ceil(1.3 * est_count) + 8`` columns. Raises
    `SubspaceTooSmallError` when every Ritz value of the block lands in the
    interval, since eigenvalues may then be missing.
    """
    cfg = cfg or SolverConfig()
    xi, eta = _check_interval(interval)
    t0 = time.perf_counter()
    counters = Counters()
    n = as_operator(A).n
    solve = None
    if B is not None:
        solve = as_solver(B_solve) or SpdFactor(B).solve
    p = min(subspace_dim(est_count), n)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.standard_normal((n, p))
    ext_lo = xi - 10 * cfg.res_tol * max(1.0, abs(xi))
    ext_hi = eta + 10 * cfg.res_tol * max(1.0, abs(eta))
    # one block cycle counts as one iteration
    max_cycles = cfg.iteration_cap()
    prev_count = -1
    lam = res = X = None
    inside = np.zeros(0, dtype=bool)
    for _ in range(max_cycles):
        Y = apply_pol(filt, A, Y, solve, counters)
        counters.niter += 1
        Y, _ = np.linalg.qr(Y)
        AY = block_apply(A, Y)
        BY = Y if B is None else block_apply(B, Y)
        counters.n_A_matvec += p
        counters.n_B_matvec += 0 if B is None else p
        Ap = Y.T @ AY
        Bp = Y.T @ BY
        lam, W = sla.eigh(0.5 * (Ap + Ap.T), 0.5 * (Bp + Bp.T))
        X = Y @ W
        R = AY @ W - (BY @ W) * lam
        res = np.linalg.norm(R, axis=0)
        inside = (lam >= ext_lo) & (lam <= ext_hi)
        count = int(inside.sum())
        if count >= p:
            raise SubspaceTooSmallError(
                f"all {p} Ritz values fall in the interval; increase est_count above {est_count}"
            )
        done = count == prev_count and np.all(res[inside] <= cfg.res_tol)
        prev_count = count
        Y = X
        if done:
            break
    else:
        found = [RitzPair(0.0, lam[i], X[:, i], res[i]) for i in np.flatnonzero(inside)
                 if res[i] <= cfg.res_tol]
        return _finish(found, (xi, eta), counters, t0, False, "cycle cap reached", "cheb_si")
    found = [RitzPair(0.0, lam[i], X[:, i], res[i]) for i in np.flatnonzero(inside)]
    return _finish(found, (xi, eta), counters, t0, True, "", "cheb_si")
