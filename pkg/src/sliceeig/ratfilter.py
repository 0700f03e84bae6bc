"""Rational filters: Cauchy-quadrature and least-squares (repeated poles).

Filters are built for the mapped interval ``[-1, 1]``; a filter for
``[xi, eta]`` keeps the center ``c`` and radius ``r`` of the affine map
``t -> (t - c)/r``. A filter is

    rho(t) = 2 Re sum_j sum_k alpha_jk / (t_hat - sigma_j)^k

with ``Im sigma_j > 0`` (the conjugate poles are implicit).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import SliceEigError
from .operators import Counters, as_operator, as_solver

MAX_TOTAL_MULTIPLICITY = 40
RULES = ("gauss_legendre", "midpoint")
KINDS = ("cauchy", "ls")


@dataclass(frozen=True)
class RatWeight:
    """LS weight: ``inside`` on ``[-1, 1]``, ``outside`` elsewhere, domain ``[-beta, beta]``."""

    inside: float = 0.01
    outside: float = 1.0
    beta: float = 8.0
    npanel: int = 64

    def __post_init__(self):
        if not (self.inside > 0 and self.outside > 0):
            raise ValueError("weights must be positive")
        if not self.beta > 1:
            raise ValueError("truncation half-width must exceed 1")


@dataclass(frozen=True)
class RationalFilter:
    """Scaled rational filter; ``alpha[j][k-1]`` multiplies ``(t_hat - poles[j])^-k``."""

    poles: np.ndarray
    mults: tuple
    alpha: tuple
    scale: float
    center: float = 0.0
    radius: float = 1.0
    kind: str = "ls"
    rule: str = "gauss_legendre"
    bar: float = 0.5
    interval: tuple = field(default=(-1.0, 1.0))

    @property
    def p(self):
        return len(self.poles)

    @property
    def total_mult(self):
        return int(sum(self.mults))

    def shifts(self):
        """Poles in the original variable."""
        return self.center + self.radius * np.asarray(self.poles)

    def terms(self):
        """``(sigma_j, [alpha_j1, ...])`` in the original variable."""
        r = self.radius
        out = []
        for s, a in zip(self.shifts(), self.alpha):
            k = np.arange(1, len(a) + 1)
            out.append((complex(s), np.asarray(a) * r**k))
        return out

    def __call__(self, t):
        return eval_rat(self, t)


def cauchy_poles(p, rule="gauss_legendre", interval=(-1.0, 1.0)):
    """Upper-half-plane quadrature poles and coefficients for the step function.

    The circle through the interval ends is parametrized by
    ``s(theta) = c + r e^{i theta}``; ``h(t) = 1/(2 pi) int r e^{i theta}/(s - t) d theta``
    so node ``theta_j`` with weight ``omega_j`` contributes
    ``alpha_j = -omega_j r e^{i theta_j} / (2 pi)`` to ``sum alpha_j/(t - sigma_j)``.
    """
    if p < 1:
        raise SliceEigError("need at least one pole")
    if rule not in RULES:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    a, b = float(interval[0]), float(interval[1])
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    if rule == "midpoint":
        theta = (2 * np.arange(1, p + 1) - 1) * np.pi / (2 * p)
        omega = np.full(p, np.pi / p)
    else:
        x, w = np.polynomial.legendre.leggauss(p)
        theta = 0.5 * np.pi * (1 + x)
        omega = 0.5 * np.pi * w
    e = np.exp(1j * theta)
    return c + r * e, -omega * r * e / (2 * np.pi)


def _quadrature(weight: RatWeight):
    x, w = np.polynomial.legendre.leggauss(weight.npanel)
    pts, wts = [], []
    for lo, hi, wt in ((-weight.beta, -1.0, weight.outside), (-1.0, 1.0, weight.inside),
                       (1.0, weight.beta, weight.outside)):
        h = 0.5 * (hi - lo)
        pts.append(0.5 * (hi + lo) + h * x)
        wts.append(wt * h * w)
    t = np.concatenate(pts)
    return t, np.concatenate(wts), (np.abs(t) <= 1).astype(float)


def _basis(poles, mults, t):
    cols = []
    for s, k in zip(poles, mults):
        inv = 1.0 / (t - s)
        cols.extend(inv ** (q + 1) for q in range(k))
    return np.column_stack(cols)


def _eval_raw(poles, mults, alpha, t):
    flat = np.concatenate([np.asarray(a, dtype=complex) for a in alpha])
    return 2.0 * np.real(_basis(poles, mults, np.asarray(t, dtype=float)) @ flat)


def _split(flat, mults):
    out, i = [], 0
    for k in mults:
        out.append(np.array(flat[i : i + k]))
        i += k
    return tuple(out)


def ls_objective(poles, mults, alpha, weight: RatWeight | None = None):
    """Quadrature value of ``integral w(t) (h(t) - rho(t))^2 dt`` for raw coefficients."""
    weight = weight or RatWeight()
    t, w, h = _quadrature(weight)
    return float(np.sum(w * (h - _eval_raw(poles, mults, alpha, t)) ** 2))


def ls_coeffs(poles, mults, weight: RatWeight | None = None):
    """Weighted least-squares coefficients for fixed poles.

    Unknowns are the real and imaginary parts of the ``alpha_jk``; the
    normal equations are equilibrated and solved with pivoted LU.
    """
    weight = weight or RatWeight()
    poles = np.asarray(poles, dtype=complex)
    mults = tuple(int(k) for k in mults)
    if len(mults) != poles.size or min(mults) < 1:
        raise SliceEigError("need one positive multiplicity per pole")
    if sum(mults) > MAX_TOTAL_MULTIPLICITY:
        raise SliceEigError(f"total multiplicity {sum(mults)} exceeds {MAX_TOTAL_MULTIPLICITY}")
    if np.any(poles.imag <= 0):
        raise SliceEigError("poles must lie in the upper half-plane")
    t, w, h = _quadrature(weight)
    Phi = _basis(poles, mults, t)
    Psi = np.hstack([2.0 * Phi.real, -2.0 * Phi.imag])
    G = Psi.T @ (w[:, None] * Psi)
    rhs = Psi.T @ (w * h)
    dg = np.sqrt(np.diag(G))
    Gs = G / np.outer(dg, dg)
    rcond = 1.0 / np.linalg.cond(Gs)
    if not rcond > 1e-15:
        gaps = np.abs(poles[:, None] - poles[None, :])
        np.fill_diagonal(gaps, np.inf)
        j, k = np.unravel_index(np.argmin(gaps), gaps.shape)
        cluster = poles[[j, k]] if poles.size > 1 else poles
        raise SliceEigError(f"rank-deficient Gram matrix near poles {np.round(cluster, 6).tolist()}")
    x = sla.lu_solve(sla.lu_factor(Gs), rhs / dg) / dg
    m = Phi.shape[1]
    return _split(x[:m] + 1j * x[m:], mults)


def _scaled(poles, mults, alpha, kind, rule, center, radius, interval):
    raw = _eval_raw(poles, mults, alpha, np.array([-1.0, 1.0]))
    end = 0.5 * (raw[0] + raw[1])
    if not end > 0:
        raise SliceEigError("filter has nonpositive value at the interval ends")
    s = 0.5 / end
    alpha = tuple(np.asarray(a) * s for a in alpha)
    return RationalFilter(np.asarray(poles), tuple(mults), alpha, float(s), center, radius, kind,
                          rule, 0.5, interval)


def find_ratf(interval=(-1.0, 1.0), p=3, repeats=1, rule="gauss_legendre", kind="ls",
              weight: RatWeight | None = None) -> RationalFilter:
    """Rational filter for ``interval``, scaled so both endpoint values are 1/2.

    ``repeats`` is one multiplicity for all poles or a sequence of ``p``.
    Cauchy filters require simple poles.
    """
    xi, eta = float(interval[0]), float(interval[1])
    if not xi < eta:
        raise SliceEigError(f"degenerate interval [{xi}, {eta}]")
    if kind not in KINDS:
        raise ValueError(f"unknown filter kind {kind!r}")
    mults = (int(repeats),) * p if np.ndim(repeats) == 0 else tuple(int(k) for k in repeats)
    if len(mults) != p:
        raise SliceEigError(f"need {p} multiplicities, got {len(mults)}")
    # pole j mirrors pole p-1-j; unequal repeats tilt the filter so one
    # scale factor cannot put both endpoint values at 1/2
    if mults != mults[::-1]:
        raise SliceEigError(f"multiplicities {mults} must read the same reversed")
    poles, calpha = cauchy_poles(p, rule)
    if kind == "cauchy":
        if any(k != 1 for k in mults):
            raise SliceEigError("Cauchy filters use simple poles; use kind='ls' for repeats")
        alpha = tuple(np.array([a]) for a in calpha)
    else:
        alpha = ls_coeffs(poles, mults, weight)
    c, r = 0.5 * (xi + eta), 0.5 * (eta - xi)
    return _scaled(poles, mults, alpha, kind, rule, c, r, (xi, eta))


def eval_rat(f: RationalFilter, t):
    """Scaled filter value at real ``t`` (original variable)."""
    t_hat = (np.asarray(t, dtype=float) - f.center) / f.radius
    out = _eval_raw(f.poles, f.mults, f.alpha, np.atleast_1d(t_hat))
    return float(out[0]) if np.ndim(t) == 0 else out


def _prepare(f, solvers):
    solvers = list(solvers)
    if len(solvers) != f.p:
        raise SliceEigError(f"need {f.p} shifted solvers, got {len(solvers)}")
    return [as_solver(s) for s in solvers]


def _timed_solve(solve, x, j, counters):
    t0 = time.perf_counter()
    try:
        y = solve(x)
    except Exception as exc:
        raise SliceEigError(f"shifted solve failed for pole {j}: {exc}") from exc
    counters.n_shift_solve += 1
    counters.t_sv += time.perf_counter() - t0
    return y


def _bmul(B, x, counters):
    t0 = time.perf_counter()
    y = B.apply(x.real) + 1j * B.apply(x.imag)
    counters.n_B_matvec += 1
    counters.t_mv += time.perf_counter() - t0
    return y


def apply_rat(f: RationalFilter, solvers, opB, v, counters: Counters | None = None):
    """``rho(B^{-1}A) v`` (``opB=None`` for the standard case).

    Per pole, powers ``[(A - sigma B)^{-1} B]^k v`` are built one solve at a
    time and accumulated; the conjugate poles enter through ``2 Re``.
    """
    counters = counters if counters is not None else Counters()
    v = np.asarray(v, dtype=float)
    solves = _prepare(f, solvers)
    B = None if opB is None else as_operator(opB, v.shape[0])
    acc = np.zeros(v.shape[0], dtype=complex)
    for j, ((_, alpha), solve) in enumerate(zip(f.terms(), solves)):
        x = v.astype(complex)
        for a in alpha:
            rhs = x if B is None else _bmul(B, x, counters)
            x = _timed_solve(solve, rhs, j, counters)
            acc += a * x
    return 2.0 * acc.real


def apply_rat_pair(f: RationalFilter, solvers, opB, w, z, counters: Counters | None = None):
    """Filter a pair ``(w, z) = (B z, z)``: returns ``(B rho(M) z, rho(M) z)``, ``M = B^{-1}A``.

    ``B z = w`` is known, so only ``sum k_j`` products with ``B`` are needed.
    """
    counters = counters if counters is not None else Counters()
    solves = _prepare(f, solvers)
    B = as_operator(opB, np.asarray(z).shape[0])
    acc = np.zeros(np.asarray(z).shape[0], dtype=complex)
    bacc = np.zeros_like(acc)
    for j, ((_, alpha), solve) in enumerate(zip(f.terms(), solves)):
        bx = np.asarray(w, dtype=complex)
        for a in alpha:
            x = _timed_solve(solve, bx, j, counters)
            bx = _bmul(B, x, counters)
            acc += a * x
            bacc += a * bx
    return 2.0 * bacc.real, 2.0 * acc.real
