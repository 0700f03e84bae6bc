"""Spectral density (DOS) estimation: kernel polynomial method and Lanczos quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SliceEigError
from .krylov import InnerProduct, SpectralBounds, lanczos_run
from .operators import as_solver, block_apply
from .tridiag import sym_tridiag_eig

# KPM maps a slightly enlarged interval to [-1, 1] so the Chebyshev weight
# stays finite on the output grid.
KPM_MARGIN = 0.01
_NORM_POINTS = 4001


@dataclass
class DosConfig:
    method: str = "kpm"
    m: int = 60
    n_vec: int = 40
    npts: int = 300
    gaussian_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("kpm", "lanczos"):
            raise ValueError(f"unknown DOS method {self.method!r}")
        if self.m < 1 or self.n_vec < 1 or self.npts < 2:
            raise ValueError("need m >= 1, n_vec >= 1 and npts >= 2")


@dataclass
class DosCurve:
    """Sampled density ``phi`` on ``xdos``; ``n * phi`` integrates to eigenvalue counts."""

    xdos: np.ndarray
    ydos: np.ndarray
    nev_est: float
    n: int

    def __post_init__(self):
        if self.xdos.size < 2 or np.any(np.diff(self.xdos) <= 0):
            raise ValueError("xdos must hold at least 2 strictly increasing points")
        if np.any(self.ydos < 0):
            raise ValueError("ydos must be nonnegative")

    @property
    def range(self):
        return float(self.xdos[0]), float(self.xdos[-1])


def jackson_coefficients(m):
    """Jackson damping factors g_0..g_m."""
    k = np.arange(m + 1)
    a = np.pi / (m + 2)
    return ((1 - k / (m + 2)) * np.sin(a) * np.cos(k * a) + np.cos(a) * np.sin(k * a) / (m + 2)) / np.sin(a)


def _bounds(bounds):
    if isinstance(bounds, SpectralBounds):
        return bounds.lmin, bounds.lmax
    lo, hi = (float(b) for b in bounds)
    if not lo < hi:
        raise SliceEigError(f"bounds need lmin < lmax, got [{lo}, {hi}]")
    return lo, hi


def _grid(lo, hi, interval, npts):
    a, b = (lo, hi) if interval is None else (float(interval[0]), float(interval[1]))
    if not a < b:
        raise SliceEigError(f"empty DOS interval [{a}, {b}]")
    return np.linspace(a, b, npts), (a, b) == (lo, hi)


def _op_size(op):
    if hasattr(op, "n"):
        return int(op.n)
    return int(op.shape[0])


def _finish(func, lo, hi, grid, is_full, n):
    """Clip, normalize to unit mass over the full range and sample on ``grid``."""
    y = np.maximum(func(grid), 0.0)
    if is_full:
        mass = np.trapezoid(y, grid)
    else:
        full = np.linspace(lo, hi, max(_NORM_POINTS, grid.size))
        mass = np.trapezoid(np.maximum(func(full), 0.0), full)
    if mass <= 0:
        raise SliceEigError("estimated density has no positive mass")
    y = y / mass
    return DosCurve(grid, y, float(n * np.trapezoid(y, grid)), n)


def kpm_dos(opA, bounds, cfg: DosConfig | None = None, interval=None) -> DosCurve:
    """Kernel polynomial estimate of the spectral density.

    Chebyshev moments are averaged over ``cfg.n_vec`` Rademacher probes and
    damped with Jackson factors. Negative values are clipped before
    normalizing to unit mass over ``bounds``. The curve is sampled on
    ``cfg.npts`` points of ``interval`` (default: the whole bounds).
    """
    cfg = cfg or DosConfig()
    lo, hi = _bounds(bounds)
    n = _op_size(opA)
    c = 0.5 * (lo + hi)
    d = 0.5 * (hi - lo) * (1 + KPM_MARGIN)
    rng = np.random.default_rng(cfg.seed)
    V = rng.choice(np.array([-1.0, 1.0]), size=(n, cfg.n_vec))
    m = cfg.m
    zeta = np.empty(m + 1)
    prev = V
    zeta[0] = np.sum(V * V)
    if m >= 1:
        cur = (block_apply(opA, V) - c * V) / d
        zeta[1] = np.sum(V * cur)
        for k in range(2, m + 1):
            nxt = 2.0 * (block_apply(opA, cur) - c * cur) / d - prev
            zeta[k] = np.sum(V * nxt)
            prev, cur = cur, nxt
    zeta /= n * cfg.n_vec
    coef = jackson_coefficients(m) * zeta
    coef[1:] *= 2.0

    def phi(t):
        s = np.clip((t - c) / d, -1.0, 1.0)
        inner = np.polynomial.chebyshev.chebval(s, coef)
        return inner / (np.pi * np.sqrt(np.maximum(1.0 - s * s, 1e-300)) * d)

    grid, is_full = _grid(lo, hi, interval, cfg.npts)
    return _finish(phi, lo, hi, grid, is_full, n)


def default_sigma(lo, hi, m):
    # (b-a)/sqrt(m) over-smooths near spectrum edges; 1/m keeps counts within 15%
    return 0.5 * (hi - lo) / m


def _gaussian_sum(nodes, weights, sigma):
    def phi(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        norm = 1.0 / (np.sqrt(2 * np.pi) * sigma)
        for th, w in zip(nodes, weights):
            out += w * np.exp(-0.5 * ((t - th) / sigma) ** 2)
        return out * norm

    return phi


def _lanczos_quadrature(opA, ip, starts, m, n):
    nodes, weights = [], []
    for w in starts:
        st = lanczos_run(opA, ip, w, min(m, n))
        theta, Y = sym_tridiag_eig(st.T, True)
        nodes.append(theta)
        weights.append(Y[0, :] ** 2)
    k = len(starts)
    return np.concatenate(nodes), np.concatenate(weights) / k


def lan_dos(opA, bounds, cfg: DosConfig | None = None, interval=None) -> DosCurve:
    """Lanczos quadrature estimate: Ritz values weighted by squared first
    eigenvector components, smoothed with Gaussians."""
    cfg = cfg or DosConfig(method="lanczos")
    lo, hi = _bounds(bounds)
    n = _op_size(opA)
    rng = np.random.default_rng(cfg.seed)
    starts = []
    for _ in range(cfg.n_vec):
        v = rng.standard_normal(n)
        starts.append(v / np.linalg.norm(v))
    nodes, weights = _lanczos_quadrature(opA, None, starts, cfg.m, n)
    sigma = cfg.gaussian_sigma or default_sigma(lo, hi, cfg.m)
    grid, is_full = _grid(lo, hi, interval, cfg.npts)
    return _finish(_gaussian_sum(nodes, weights, sigma), lo, hi, grid, is_full, n)


def dos_generalized(opA, B_solve, B_halfsolve, bounds, cfg: DosConfig | None = None, interval=None,
                    B=None) -> DosCurve:
    """Density of the pencil ``(A, B)`` by B-inner-product Lanczos quadrature.

    Each Gaussian probe ``v`` is turned into the start vector
    ``w = B^{-1/2} v`` (or ``L^{-T} v``), which has unit B-norm when ``v``
    has unit 2-norm. ``B`` itself is needed to seed ``z_1 = B w_1``.
    """
    if B is None:
        raise SliceEigError("dos_generalized needs the B operator")
    cfg = cfg or DosConfig(method="lanczos")
    lo, hi = _bounds(bounds)
    n = _op_size(opA)
    half = as_solver(B_halfsolve)
    ip = InnerProduct(B, B_solve)
    rng = np.random.default_rng(cfg.seed)
    starts = []
    for _ in range(cfg.n_vec):
        v = rng.standard_normal(n)
        w = np.asarray(half(v / np.linalg.norm(v)), dtype=float)
        starts.append(w / ip.norm(w))
    nodes, weights = _lanczos_quadrature(opA, ip, starts, cfg.m, n)
    sigma = cfg.gaussian_sigma or default_sigma(lo, hi, cfg.m)
    grid, is_full = _grid(lo, hi, interval, cfg.npts)
    return _finish(_gaussian_sum(nodes, weights, sigma), lo, hi, grid, is_full, n)


def compute_dos(opA, bounds, cfg: DosConfig, interval=None) -> DosCurve:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "kpm":
        return kpm_dos(opA, bounds, cfg, interval)
    return lan_dos(opA, bounds, cfg, interval)


def dos_count(curve: DosCurve, lo, hi) -> float:
    """Estimated eigenvalue count ``n * integral(phi)`` over ``[lo, hi]``.

    The part of ``[lo, hi]`` outside the sampled range contributes nothing.
    """
    a, b = curve.range
    if lo > hi:
        raise SliceEigError(f"reversed interval [{lo}, {hi}]")
    if hi < a or lo > b:
        raise SliceEigError(f"[{lo}, {hi}] is outside the curve range [{a}, {b}]")
    lo, hi = max(lo, a), min(hi, b)
    if lo >= hi:
        return 0.0
    x, y = curve.xdos, curve.ydos
    inside = (x > lo) & (x < hi)
    xs = np.concatenate([[lo], x[inside], [hi]])
    ys = np.concatenate([[np.interp(lo, x, y)], y[inside], [np.interp(hi, x, y)]])
    return float(curve.n * np.trapezoid(ys, xs))
