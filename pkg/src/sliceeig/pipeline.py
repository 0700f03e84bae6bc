"""End-to-end slicing runs: load, bound, estimate the density, slice, filter, solve."""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dos import DosConfig, DosCurve, compute_dos, dos_generalized, kpm_dos
from .errors import SliceEigError
from .krylov import InnerProduct, SpectralBounds, lan_tr_bounds
from .matrix import CsrMatrix, gen_laplacian, read_matrix_market
from .operators import SpdFactor, factor_shifted
from .polyfilter import damping_multipliers, find_pol
from .ratfilter import find_ratf
from .slicer import SliceSet, slice_spectrum
from .solvers import (EigenResults, SolverConfig, cheb_lan_nr, cheb_lan_tr, cheb_si, rat_lan_nr,
                      rat_lan_tr, transform_with_cholesky)

SCHEMA = 1
SOLVERS = ("nr", "tr", "si")
# eigenvalues this close (relative to the spectral width) to an interior
# breakpoint belong to the lower slice
SEAM_TOL = 1e-10


@dataclass
class RunManifest:
    """Everything needed to reproduce a run."""

    dims: tuple | None = None
    matrix: str | None = None
    bmatrix: str | None = None
    interval: tuple | None = None
    nslices: int = 1
    filter: str = "poly"
    damping: str = "lanczos_sigma"
    poles: int = 3
    repeats: int = 1
    solver: str = "nr"
    tol: float = 1e-8
    seed: int = 0
    jobs: int = 1
    out: str | None = None
    dos_method: str = "kpm"
    vectors: bool = False

    def __post_init__(self):
        if (self.dims is None) == (self.matrix is None):
            raise SliceEigError("give exactly one of a generator (dims) or a matrix file")
        if self.dims is not None:
            self.dims = tuple(int(d) for d in self.dims)
        if self.interval is not None:
            lo, hi = (float(x) for x in self.interval)
            if not lo < hi:
                raise SliceEigError(f"interval needs lo < hi, got [{lo}, {hi}]")
            self.interval = (lo, hi)
        if self.nslices < 1:
            raise SliceEigError("need at least one slice")
        if self.filter not in ("poly", "rat"):
            raise SliceEigError(f"unknown filter kind {self.filter!r}")
        if self.solver not in SOLVERS:
            raise SliceEigError(f"unknown solver {self.solver!r}")
        if self.solver == "si" and self.filter != "poly":
            raise SliceEigError("subspace iteration uses polynomial filters")
        if not self.tol > 0:
            raise SliceEigError("tolerance must be positive")
        if self.jobs < 1:
            raise SliceEigError("jobs must be at least 1")

    def echo(self):
        out = asdict(self)
        out["dims"] = list(self.dims) if self.dims else None
        out["interval"] = list(self.interval) if self.interval else None
        return out


@dataclass
class Problem:
    """Loaded matrices plus the shared Cholesky factor of ``B``."""

    A: CsrMatrix
    B: CsrMatrix | None = None
    factor: SpdFactor | None = None

    @property
    def n(self):
        return self.A.n

    @property
    def generalized(self):
        return self.B is not None


@dataclass
class RunReport:
    manifest: dict
    bounds: tuple
    slices: list
    results: list
    timings: dict = field(default_factory=dict)
    dos: dict | None = None

    @property
    def converged(self):
        return all(r.get("converged", False) for r in self.results)

    def eigenvalues(self):
        vals = [v for r in self.results for v in r.get("eigenvalues", [])]
        return np.sort(np.array(vals))

    def totals(self):
        keys = ("niter", "n_A_matvec", "n_B_matvec", "n_B_solve", "n_shift_solve")
        tot = {k: 0 for k in keys}
        for r in self.results:
            for k in keys:
                tot[k] += r.get("counters", {}).get(k, 0)
        tot["count"] = sum(len(r.get("eigenvalues", [])) for r in self.results)
        return tot

    def as_dict(self):
        return {
            "schema": SCHEMA,
            "manifest": self.manifest,
            "bounds": {"lmin": self.bounds[0], "lmax": self.bounds[1]},
            "dos": self.dos,
            "slices": self.slices,
            "results": self.results,
            "totals": self.totals(),
            "converged": self.converged,
            "timings": self.timings,
        }


def load_problem(manifest: RunManifest) -> Problem:
    A = gen_laplacian(manifest.dims) if manifest.dims else read_matrix_market(manifest.matrix)
    if manifest.bmatrix is None:
        return Problem(A)
    B = read_matrix_market(manifest.bmatrix)
    if B.n != A.n:
        raise SliceEigError(f"A is {A.n}x{A.n} but B is {B.n}x{B.n}")
    return Problem(A, B, SpdFactor(B))


def estimate_bounds(prob: Problem, seed=0) -> SpectralBounds:
    if not prob.generalized:
        return lan_tr_bounds(prob.A, seed=seed)
    return lan_tr_bounds(prob.A, InnerProduct(prob.B, prob.factor.solve), n=prob.n, seed=seed)


def estimate_dos(prob: Problem, bounds, cfg: DosConfig, interval=None) -> DosCurve:
    if not prob.generalized:
        return compute_dos(prob.A, bounds, cfg, interval)
    if cfg.method == "kpm":
        return kpm_dos(transform_with_cholesky(prob.A, factor=prob.factor), bounds, cfg, interval)
    return dos_generalized(prob.A, prob.factor.solve, prob.factor.solve_LT, bounds, cfg, interval,
                           B=prob.B)


def target_interval(manifest: RunManifest, bounds: SpectralBounds):
    if manifest.interval is None:
        return bounds.as_tuple()
    return manifest.interval


def make_slices(prob: Problem, manifest: RunManifest, bounds: SpectralBounds):
    """DOS curve on the target interval and the resulting slice set."""
    interval = target_interval(manifest, bounds)
    lo, hi = max(interval[0], bounds.lmin), min(interval[1], bounds.lmax)
    if not lo < hi:
        raise SliceEigError(f"interval {interval} misses the spectrum [{bounds.lmin}, {bounds.lmax}]")
    curve = estimate_dos(prob, bounds, DosConfig(method=manifest.dos_method, seed=manifest.seed),
                         (lo, hi))
    sl = slice_spectrum(curve, (lo, hi), manifest.nslices)
    # the outer ends follow the requested interval, not its clipped copy
    bp = sl.breakpoints.copy()
    bp[0], bp[-1] = interval
    return curve, SliceSet(bp, sl.counts)


def make_filter(manifest: RunManifest, interval, bounds: SpectralBounds):
    if manifest.filter == "rat":
        return find_ratf(interval, p=manifest.poles, repeats=manifest.repeats)
    return find_pol(interval, bounds, damping=manifest.damping)


def solve_slice(prob: Problem, manifest: RunManifest, bounds, interval, est, index) -> EigenResults:
    est_count = max(1, int(math.ceil(est)))
    cfg = SolverConfig(res_tol=manifest.tol, seed=manifest.seed + index, est_count=est_count)
    filt = make_filter(manifest, interval, bounds)
    B = prob.B
    if manifest.filter == "rat":
        solvers = [factor_shifted(prob.A, B, s) for s in filt.shifts()]
        drive = rat_lan_nr if manifest.solver == "nr" else rat_lan_tr
        return drive(prob.A, filt, interval, cfg, B=B, solvers=solvers)
    solve = prob.factor.solve if prob.generalized else None
    if manifest.solver == "si":
        return cheb_si(prob.A, filt, interval, est_count, cfg, B=B, B_solve=solve)
    drive = cheb_lan_nr if manifest.solver == "nr" else cheb_lan_tr
    return drive(prob.A, filt, interval, cfg, B=B, B_solve=solve)


def _owned(res: EigenResults, index, ns, breakpoints, width):
    """Mask of eigenvalues this slice reports; seam values go to the lower slice."""
    tol = SEAM_TOL * width
    lam = res.eigenvalues
    keep = np.ones(lam.size, dtype=bool)
    if index > 0:
        keep &= lam > breakpoints[index] + tol
    if index < ns - 1:
        keep &= lam <= breakpoints[index + 1] + tol
    return keep


def thread_cap(jobs):
    env = os.environ.get("SLICEEIG_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise SliceEigError(f"SLICEEIG_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise SliceEigError("SLICEEIG_THREADS must be at least 1")
        return max(1, min(jobs, cap))
    return jobs


def _run_one(prob, manifest, bounds, slices, i):
    lo, hi = slices.intervals()[i]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            res = solve_slice(prob, manifest, bounds, (lo, hi), slices.counts[i], i)
        except SliceEigError as exc:
            return None, {"slice": i, "converged": False, "error": str(exc), "eigenvalues": [],
                          "residuals": [], "counters": {}}
    mask = _owned(res, i, slices.ns, slices.breakpoints, bounds.lmax - bounds.lmin)
    res = EigenResults(res.eigenvalues[mask],
                       res.eigenvectors[:, mask] if res.eigenvectors.size else res.eigenvectors,
                       res.residuals[mask], res.counters, res.interval, res.converged,
                       res.message, res.solver)
    return res, res.summary(i)


def write_vectors(res: EigenResults, stem: Path, n):
    """Column block of little-endian doubles plus a JSON sidecar."""
    X = res.eigenvectors if res.count else np.zeros((n, 0))
    X.T.astype("<f8").tofile(stem.with_suffix(".bin"))
    side = {"schema": SCHEMA, "n": int(n), "count": int(res.count), "dtype": "<f8",
            "layout": "column-major", "eigenvalues": res.eigenvalues.tolist()}
    stem.with_suffix(".json").write_text(json.dumps(side, indent=2))


def read_vectors(stem):
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text())
    data = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    return data.reshape(side["count"], side["n"]).T, side


def run_solve(manifest: RunManifest, prob: Problem | None = None) -> RunReport:
    """Full pipeline. Slices run on a thread pool when ``jobs > 1``."""
    timings = {}
    t = time.perf_counter()
    prob = prob or load_problem(manifest)
    timings["load"] = time.perf_counter() - t
    t = time.perf_counter()
    bounds = estimate_bounds(prob, manifest.seed)
    timings["bounds"] = time.perf_counter() - t
    t = time.perf_counter()
    if manifest.nslices == 1:
        interval = target_interval(manifest, bounds)
        curve = None
        lo, hi = max(interval[0], bounds.lmin), min(interval[1], bounds.lmax)
        est = 0.0
        if lo < hi:
            curve = estimate_dos(prob, bounds, DosConfig(method=manifest.dos_method,
                                                         seed=manifest.seed), (lo, hi))
            est = curve.nev_est
        slices = SliceSet(np.array(interval), np.array([est]))
    else:
        curve, slices = make_slices(prob, manifest, bounds)
    timings["dos_slice"] = time.perf_counter() - t
    t = time.perf_counter()
    workers = thread_cap(manifest.jobs)
    if workers > 1 and slices.ns > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda i: _run_one(prob, manifest, bounds, slices, i),
                                 range(slices.ns)))
    else:
        outs = [_run_one(prob, manifest, bounds, slices, i) for i in range(slices.ns)]
    timings["solve"] = time.perf_counter() - t
    dos = None if curve is None else {"method": manifest.dos_method, "nev_est": curve.nev_est}
    report = RunReport(manifest.echo(), bounds.as_tuple(), slices.as_table(),
                       [summary for _, summary in outs], timings, dos)
    if manifest.out:
        out = Path(manifest.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, (res, summary) in enumerate(outs):
            (out / f"slice_{i}.json").write_text(json.dumps(strip_timing(summary), indent=2))
            if manifest.vectors and res is not None:
                write_vectors(res, out / f"slice_{i}_vectors", prob.n)
        (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2))
    return report


def strip_timing(d):
    """Copy of a report dict without wall-clock fields (for determinism checks)."""
    if isinstance(d, dict):
        return {k: strip_timing(v) for k, v in d.items()
                if k != "timings" and not (k.startswith("t_") and isinstance(v, float))}
    if isinstance(d, list):
        return [strip_timing(v) for v in d]
    return d


def filter_samples(manifest: RunManifest, interval, bounds: SpectralBounds, npts=1000):
    """Grid, filter values and a JSON header describing the filter."""
    filt = make_filter(manifest, interval, bounds)
    if manifest.filter == "poly":
        t = np.linspace(bounds.lmin, bounds.lmax, npts)
        y = filt(filt.map.to_mapped(t).clip(-1.0, 1.0))
        header = {"kind": "poly", "degree": filt.degree, "gamma": filt.gamma, "bar": filt.bar,
                  "damping": filt.damping, "center": filt.map.c, "half_width": filt.map.d,
                  "coef": filt.coef.tolist(),
                  "damping_multipliers": damping_multipliers(filt.degree, filt.damping).tolist()}
    else:
        t = np.linspace(filt.center - 4 * filt.radius, filt.center + 4 * filt.radius, npts)
        y = filt(t)
        header = {"kind": "rat", "poles": [[z.real, z.imag] for z in filt.shifts()],
                  "mults": list(filt.mults), "bar": filt.bar, "scale": filt.scale,
                  "alpha": [[[a.real, a.imag] for a in al] for _, al in filt.terms()]}
    header.update({"schema": SCHEMA, "interval": list(interval)})
    return t, y, header
