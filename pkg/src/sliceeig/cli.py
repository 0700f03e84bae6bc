"""``sliceeig`` command line: gen, bounds, dos, slice, filter-dump, solve."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .dos import DosConfig, dos_count
from .errors import SliceEigError
from .matrix import gen_laplacian, write_matrix_market
from .pipeline import (SCHEMA, RunManifest, estimate_bounds, estimate_dos, filter_samples,
                       load_problem, make_slices, run_solve, target_interval)

DAMPING = {"sigma": "lanczos_sigma", "jackson": "jackson", "none": "none"}


def _dims(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from exc
    if not 1 <= len(dims) <= 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError("dims take 1 to 3 positive sizes")
    return dims


def _interval(text):
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"interval must be LO,HI, got {text!r}") from exc
    if not lo < hi:
        raise argparse.ArgumentTypeError("interval needs LO < HI")
    return lo, hi


def _common(p, *, solve=False):
    src = p.add_argument_group("input")
    g = src.add_mutually_exclusive_group(required=True)
    g.add_argument("--matrix", help="MatrixMarket file for A")
    g.add_argument("--dims", type=_dims, help="Laplacian grid d1[,d2[,d3]]")
    src.add_argument("--bmatrix", help="MatrixMarket file for B (generalized problem)")
    p.add_argument("--interval", type=_interval, help="LO,HI (default: whole spectrum)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")
    if solve:
        p.add_argument("--slices", type=int, default=1)
        p.add_argument("--filter", choices=("poly", "rat"), default="poly")
        p.add_argument("--damping", choices=tuple(DAMPING), default="sigma")
        p.add_argument("--poles", type=int, default=3)
        p.add_argument("--repeats", type=int, default=1)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--solver", choices=("nr", "tr", "si"), default="nr")
        p.add_argument("--dos-method", choices=("kpm", "lanczos"), default="kpm")
        p.add_argument("--vectors", action="store_true", help="also write eigenvector blocks")


def build_parser():
    parser = argparse.ArgumentParser(prog="sliceeig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a Laplacian as MatrixMarket")
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--out", default=".", help="output file or directory")

    p = sub.add_parser("bounds", help="estimate the spectral interval")
    _common(p)

    p = sub.add_parser("dos", help="spectral density curve")
    _common(p)
    p.add_argument("--method", choices=("kpm", "lanczos"), default="kpm")
    p.add_argument("--degree", type=int, default=60, help="moments / Lanczos steps")
    p.add_argument("--nvec", type=int, default=40)
    p.add_argument("--npts", type=int, default=300)

    p = sub.add_parser("slice", help="partition the interval by the density")
    _common(p)
    p.add_argument("--slices", type=int, default=1)
    p.add_argument("--dos-method", choices=("kpm", "lanczos"), default="kpm")

    p = sub.add_parser("filter-dump", help="sample a filter on a grid")
    _common(p)
    p.add_argument("--filter", choices=("poly", "rat"), default="poly")
    p.add_argument("--damping", choices=tuple(DAMPING), default="sigma")
    p.add_argument("--poles", type=int, default=3)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--npts", type=int, default=1000)

    p = sub.add_parser("solve", help="all eigenpairs in the interval")
    _common(p, solve=True)
    return parser


def _manifest(args, **extra):
    kw = dict(dims=args.dims, matrix=args.matrix, bmatrix=args.bmatrix, interval=args.interval,
              seed=args.seed, out=args.out)
    kw.update(extra)
    return RunManifest(**kw)


def _emit(obj, fmt, rows=None, header=None):
    if fmt == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _outdir(args):
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args):
    A = gen_laplacian(args.dims)
    out = Path(args.out)
    if out.is_dir() or args.out.endswith(("/", "\\")):
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"laplacian_{'x'.join(map(str, args.dims))}.mtx"
    write_matrix_market(A, out)
    _emit({"schema": SCHEMA, "path": str(out), "n": A.n, "nnz": A.nnz}, "json")
    return 0


def cmd_bounds(args):
    prob = load_problem(_manifest(args))
    b = estimate_bounds(prob, args.seed)
    obj = {"schema": SCHEMA, "n": prob.n, "lmin": b.lmin, "lmax": b.lmax}
    _emit(obj, args.format, [[b.lmin, b.lmax]], ["lmin", "lmax"])
    return 0


def cmd_dos(args):
    man = _manifest(args, dos_method=args.method)
    prob = load_problem(man)
    b = estimate_bounds(prob, args.seed)
    cfg = DosConfig(method=args.method, m=args.degree, n_vec=args.nvec, npts=args.npts,
                    seed=args.seed)
    lo, hi = target_interval(man, b)
    curve = estimate_dos(prob, b, cfg)
    nev = dos_count(curve, max(lo, b.lmin), min(hi, b.lmax)) if lo < b.lmax and hi > b.lmin else 0.0
    summary = {"schema": SCHEMA, "method": args.method, "n": prob.n, "lmin": b.lmin, "lmax": b.lmax,
               "interval": [lo, hi], "nev_est": nev}
    out = _outdir(args)
    if out:
        with open(out / "dos.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "phi"])
            w.writerows(zip(curve.xdos.tolist(), curve.ydos.tolist()))
        (out / "dos.json").write_text(json.dumps(summary, indent=2))
    _emit(summary, args.format, zip(curve.xdos.tolist(), curve.ydos.tolist()), ["t", "phi"])
    return 0


def cmd_slice(args):
    man = _manifest(args, nslices=args.slices, dos_method=args.dos_method)
    prob = load_problem(man)
    b = estimate_bounds(prob, args.seed)
    _, slices = make_slices(prob, man, b)
    table = slices.as_table()
    obj = {"schema": SCHEMA, "interval": list(target_interval(man, b)), "slices": table}
    out = _outdir(args)
    if out:
        (out / "slices.json").write_text(json.dumps(obj, indent=2))
    _emit(obj, args.format, [[s["lo"], s["hi"], s["est_count"]] for s in table],
          ["lo", "hi", "est_count"])
    return 0


def cmd_filter_dump(args):
    man = _manifest(args, filter=args.filter, damping=DAMPING[args.damping], poles=args.poles,
                    repeats=args.repeats)
    if args.interval is None:
        raise SliceEigError("filter-dump needs --interval")
    b = None
    if args.filter == "poly":
        b = estimate_bounds(load_problem(man), args.seed)
    t, y, header = filter_samples(man, args.interval, b, args.npts)
    out = _outdir(args)
    if out:
        with open(out / "filter.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "rho"])
            w.writerows(zip(t.tolist(), np.asarray(y).tolist()))
        (out / "filter.json").write_text(json.dumps(header, indent=2))
    _emit(header, args.format, zip(t.tolist(), np.asarray(y).tolist()), ["t", "rho"])
    return 0


def cmd_solve(args):
    man = _manifest(args, nslices=args.slices, filter=args.filter, damping=DAMPING[args.damping],
                    poles=args.poles, repeats=args.repeats, solver=args.solver, tol=args.tol,
                    jobs=args.jobs, dos_method=args.dos_method, vectors=args.vectors)
    report = run_solve(man)
    obj = report.as_dict()
    rows = [[r["slice"], lam, res] for r in report.results
            for lam, res in zip(r["eigenvalues"], r["residuals"])]
    _emit(obj, args.format, rows, ["slice", "eigenvalue", "residual"])
    for r in report.results:
        if not r.get("converged", False):
            why = r.get("error") or r.get("message") or "not converged"
            print(f"slice {r['slice']}: {why}", file=sys.stderr)
    return 0 if report.converged else 1


COMMANDS = {"gen": cmd_gen, "bounds": cmd_bounds, "dos": cmd_dos, "slice": cmd_slice,
            "filter-dump": cmd_filter_dump, "solve": cmd_solve}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SliceEigError, OSError) as exc:
        print(f"sliceeig: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
