"""Balanced, damped Chebyshev polynomial filters.

A filter of degree ``k`` centered at ``gamma`` on the mapped spectrum
``[-1, 1]`` is the normalized delta expansion

    rho(t) = sum_j mu_hat_j T_j(t) / sum_j mu_hat_j T_j(gamma),

with ``mu_0 = 1/2``, ``mu_j = cos(j arccos gamma)`` and damping factors
folded into ``mu_hat``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dos import jackson_coefficients
from .errors import SliceEigError
from .krylov import SpectralBounds
from .operators import Counters, as_operator, as_solver, block_apply

DAMPING_KINDS = ("none", "lanczos_sigma", "jackson")
_ALIASES = {"sigma": "lanczos_sigma"}
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


@dataclass(frozen=True)
class SpectralMap:
    """Affine map ``t -> (t - c)/d`` sending ``[lmin, lmax]`` onto ``[-1, 1]``."""

    c: float
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("spectral map needs d > 0")

    @classmethod
    def from_bounds(cls, bounds):
        lo, hi = (bounds.lmin, bounds.lmax) if isinstance(bounds, SpectralBounds) else bounds
        return cls(0.5 * (hi + lo), 0.5 * (hi - lo))

    def to_mapped(self, t):
        return (np.asarray(t, dtype=float) - self.c) / self.d

    def from_mapped(self, s):
        return self.c + self.d * np.asarray(s, dtype=float)


@dataclass(frozen=True)
class PolynomialFilter:
    """Normalized filter ``rho(t) = sum_j coef[j] T_j(t)`` on the mapped variable.

    ``boundary`` is ``"left"``/``"right"`` for slices touching an end of the
    spectrum (``gamma`` then sits at that end), else None. ``capped`` marks a
    filter that hit ``max_deg`` without meeting ``tau``.
    """

    degree: int
    gamma: float
    mu: np.ndarray
    map: SpectralMap
    tau: float
    interval: tuple
    bar: float
    damping: str
    boundary: str | None = None
    capped: bool = False

    @property
    def coef(self):
        return self.mu / _series(self.mu, self.gamma)

    def __call__(self, t):
        return eval_pol(self, t)


def _damping_kind(kind):
    kind = _ALIASES.get(kind, kind)
    if kind not in DAMPING_KINDS:
        raise ValueError(f"unknown damping {kind!r}; choose from none, sigma, jackson")
    return kind


def chebyshev_coeffs(gamma, k):
    """Undamped delta-expansion coefficients ``mu_0..mu_k`` for center ``gamma``."""
    if not -1 < gamma < 1:
        raise SliceEigError(f"gamma must lie in (-1, 1), got {gamma}")
    return _mu(gamma, k)


def _mu(gamma, k):
    j = np.arange(k + 1)
    mu = np.cos(j * np.arccos(np.clip(gamma, -1.0, 1.0)))
    mu[0] = 0.5
    return mu


def damping_multipliers(k, kind="lanczos_sigma"):
    """Damping factors ``sigma_0..sigma_k`` (``sigma_0 = 1`` for every kind)."""
    kind = _damping_kind(kind)
    if kind == "none":
        return np.ones(k + 1)
    if kind == "jackson":
        g = jackson_coefficients(k)
        return g / g[0]
    j = np.arange(1, k + 1)
    theta = np.pi / (k + 1)
    return np.concatenate([[1.0], np.sin(j * theta) / (j * theta)])


def _series(c, t):
    return np.polynomial.chebyshev.chebval(t, c)


def eval_pol(f: PolynomialFilter, t):
    """``rho(t)`` for mapped ``|t| <= 1`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.abs(t_arr) > 1 + 1e-14):
        raise SliceEigError("eval_pol needs |t| <= 1 on the mapped variable")
    out = _series(f.coef, t_arr)
    return float(out) if np.ndim(t) == 0 else out


def _rho_pair(damp, gamma, a, b):
    """Endpoint values and their gamma-derivatives for the damped filter."""
    k = damp.size - 1
    j = np.arange(k + 1)
    phi = np.arccos(gamma)
    mu = damp * np.cos(j * phi)
    mu[0] = 0.5 * damp[0]
    # d mu_j / d gamma = j sin(j phi) / sin(phi)
    dmu = damp * j * np.sin(j * phi) / np.sin(phi)
    ta = np.cos(j * np.arccos(a))
    tb = np.cos(j * np.arccos(b))
    tg = np.cos(j * phi)
    den = mu @ tg
    dden = dmu @ tg + mu @ (j * np.sin(j * phi) / np.sin(phi))
    ra, rb = (mu @ ta) / den, (mu @ tb) / den
    dra = (dmu @ ta - ra * dden) / den
    drb = (dmu @ tb - rb * dden) / den
    return ra, rb, dra, drb


def balance_center(k, interval, damping="lanczos_sigma"):
    """Center ``gamma`` in ``(a, b)`` with ``rho(a) = rho(b)`` for degree ``k``.

    Safeguarded Newton from the midpoint: steps leaving the current sign
    bracket are replaced by bisection; after the Newton cap plain bisection
    finishes the job.
    """
    a, b = float(interval[0]), float(interval[1])
    if not -1 <= a < b <= 1:
        raise SliceEigError(f"need -1 <= a < b <= 1, got [{a}, {b}]")
    damp = damping_multipliers(k, damping)
    eps = 1e-15
    lo, hi = max(a, -1 + eps), min(b, 1 - eps)
    if abs(a + b) <= 1e-15:
        return 0.0
    fa = np.subtract(*_rho_pair(damp, lo, a, b)[:2])
    fb = np.subtract(*_rho_pair(damp, hi, a, b)[:2])
    if fa < 0 or fb > 0:
        raise SliceEigError(f"degree-{k} filter cannot be balanced on [{a}, {b}]")
    gamma = 0.5 * (lo + hi)
    for _ in range(NEWTON_MAXIT):
        ra, rb, dra, drb = _rho_pair(damp, gamma, a, b)
        f = ra - rb
        if abs(f) <= NEWTON_TOL:
            return gamma
        # rho(a) - rho(b) is positive near a and negative near b
        if f > 0:
            lo = gamma
        else:
            hi = gamma
        df = dra - drb
        step = gamma - f / df if df != 0 else np.nan
        gamma = step if lo < step < hi else 0.5 * (lo + hi)
    for _ in range(200):
        ra, rb, _, _ = _rho_pair(damp, gamma, a, b)
        f = ra - rb
        if abs(f) <= NEWTON_TOL:
            return gamma
        if f > 0:
            lo = gamma
        else:
            hi = gamma
        gamma = 0.5 * (lo + hi)
        if hi - lo <= 1e-16:
            break
    ra, rb, _, _ = _rho_pair(damp, gamma, a, b)
    if abs(ra - rb) <= 1e-10:
        return gamma
    raise SliceEigError(f"could not balance degree-{k} filter on [{a}, {b}]")


def _make(k, gamma, damping, fmap, tau, interval, boundary, capped):
    kind = _damping_kind(damping)
    mu = damping_multipliers(k, kind) * _mu(gamma, k)
    proto = PolynomialFilter(k, gamma, mu, fmap, tau, interval, 0.0, kind, boundary, capped)
    a, b = interval
    if boundary == "left":
        bar = eval_pol(proto, b)
    elif boundary == "right":
        bar = eval_pol(proto, a)
    else:
        bar = min(eval_pol(proto, a), eval_pol(proto, b))
    return PolynomialFilter(k, gamma, mu, fmap, tau, interval, float(bar), kind, boundary, capped)


def pol_filter(interval_mapped, k, damping="lanczos_sigma", fmap=None, tau=0.8):
    """Balanced degree-``k`` filter for a mapped interval (no degree search)."""
    a, b = float(interval_mapped[0]), float(interval_mapped[1])
    fmap = fmap or SpectralMap(0.0, 1.0)
    gamma = balance_center(k, (a, b), damping)
    return _make(k, gamma, damping, fmap, tau, (a, b), None, False)


def _separates(f: PolynomialFilter):
    """True when ``rho >= bar > 0`` across the interval (no side lobe inside it)."""
    if not f.bar > 0:
        return False
    a, b = f.interval
    t = np.linspace(a, b, max(256, 16 * f.degree))
    return bool(eval_pol(f, t).min() >= f.bar - 1e-12 * max(1.0, abs(f.bar)))


def find_pol(interval, bounds, tau=0.8, max_deg=3000, damping="lanczos_sigma") -> PolynomialFilter:
    """Lowest-degree balanced filter whose endpoint values are at most ``tau``.

    Slices reaching past an end of ``bounds`` are boundary slices: ``gamma``
    is pinned to that end of the mapped spectrum and only the interior
    endpoint must satisfy the threshold.
    """
    xi, eta = float(interval[0]), float(interval[1])
    if not xi < eta:
        raise SliceEigError(f"degenerate interval [{xi}, {eta}]")
    fmap = SpectralMap.from_bounds(bounds)
    lmin, lmax = fmap.c - fmap.d, fmap.c + fmap.d
    if eta <= lmin or xi >= lmax:
        raise SliceEigError(f"[{xi}, {eta}] does not overlap the spectrum [{lmin}, {lmax}]")
    a, b = (float(np.clip(fmap.to_mapped(x), -1.0, 1.0)) for x in (xi, eta))
    left, right = a <= -1.0, b >= 1.0
    if left and right:
        raise SliceEigError("interval covers the whole spectrum; no filtering needed")
    kind = _damping_kind(damping)
    boundary = "left" if left else "right" if right else None
    best = None
    for k in range(1, max_deg + 1):
        if boundary == "left":
            f = _make(k, -1.0, kind, fmap, tau, (a, b), "left", False)
            worst = f.bar
        elif boundary == "right":
            f = _make(k, 1.0, kind, fmap, tau, (a, b), "right", False)
            worst = f.bar
        else:
            try:
                gamma = balance_center(k, (a, b), kind)
            except SliceEigError:
                continue
            f = _make(k, gamma, kind, fmap, tau, (a, b), None, False)
            worst = max(eval_pol(f, a), eval_pol(f, b))
        if worst <= tau:
            if not _separates(f):
                raise SliceEigError(
                    f"[{xi}, {eta}] is too wide for a polynomial filter; use more slices"
                )
            return f
        best = f
    if best is None:
        raise SliceEigError(f"no balanced filter up to degree {max_deg}")
    return PolynomialFilter(best.degree, best.gamma, best.mu, fmap, tau, (a, b), best.bar, kind,
                            boundary, True)


def apply_pol(f: PolynomialFilter, opA, v, B_solve=None, counters: Counters | None = None):
    """``rho(A_hat) v`` with ``A_hat = (A - cI)/d``, or ``rho((B^{-1}A - cI)/d) v``
    when ``B_solve`` is given. ``v`` may be a block of columns.

    Costs exactly ``k`` products with ``A`` (and ``k`` solves with ``B``).
    """
    v = np.asarray(v, dtype=float)
    A = as_operator(opA, v.shape[0])
    solve = as_solver(B_solve)
    c, d = f.map.c, f.map.d
    coef = f.coef
    counters = counters if counters is not None else Counters()
    t0 = time.perf_counter()

    ncol = 1 if v.ndim == 1 else v.shape[1]

    def mv(x):
        y = A.apply(x) if x.ndim == 1 else block_apply(opA, x)
        counters.n_A_matvec += ncol
        if solve is not None:
            ts = time.perf_counter()
            y = solve(y) if y.ndim == 1 else np.column_stack([solve(c) for c in y.T])
            counters.n_B_solve += ncol
            counters.t_sv += time.perf_counter() - ts
        return y

    out = coef[0] * v
    if f.degree >= 1:
        prev = v
        cur = (mv(v) - c * v) / d
        out = out + coef[1] * cur
        for j in range(2, f.degree + 1):
            nxt = 2.0 * (mv(cur) - c * cur) / d - prev
            out += coef[j] * nxt
            prev, cur = cur, nxt
    counters.t_mv += time.perf_counter() - t0
    return out


def apply_pol_pair(f: PolynomialFilter, opA, B_solve, z, w, counters: Counters | None = None):
    """Filter a B-image pair ``(z, w) = (B w, w)``.

    Returns ``(B rho(M) w, rho(M) w)`` with ``M = (B^{-1}A - cI)/d``, running
    the recurrence on ``t_j = B T_j(M) w`` so that only ``k`` products with
    ``A`` and ``k`` solves with ``B`` are needed.
    """
    A = as_operator(opA, np.asarray(w).shape[0])
    solve = as_solver(B_solve)
    c, d = f.map.c, f.map.d
    coef = f.coef
    counters = counters if counters is not None else Counters()
    t0 = time.perf_counter()
    solve_time = 0.0

    def step(s, t):
        y = A.apply(s)
        counters.n_A_matvec += 1
        return y - c * t

    def bsolve(t):
        nonlocal solve_time
        ts = time.perf_counter()
        s = solve(t)
        counters.n_B_solve += 1
        solve_time += time.perf_counter() - ts
        return s

    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    out_t = coef[0] * z
    out_s = coef[0] * w
    if f.degree >= 1:
        t_prev = z
        t_cur = step(w, z) / d
        s_cur = bsolve(t_cur)
        out_t = out_t + coef[1] * t_cur
        out_s = out_s + coef[1] * s_cur
        for j in range(2, f.degree + 1):
            t_nxt = 2.0 * step(s_cur, t_cur) / d - t_prev
            s_nxt = bsolve(t_nxt)
            out_t += coef[j] * t_nxt
            out_s += coef[j] * s_nxt
            t_prev, t_cur, s_cur = t_cur, t_nxt, s_nxt
    counters.t_sv += solve_time
    counters.t_mv += time.perf_counter() - t0 - solve_time
    return out_t, out_s
