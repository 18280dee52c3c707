"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConvergenceError,
    DataFormatError,
    DegenerateModelError,
    DimensionError,
    ExistenceError,
    HyperplaneVerificationError,
    LikelihoodDomainError,
    SurfaceError,
)
from .estimation import FitConfig, estimate_ability, fit_joint, fit_marginal_em
from .geometry_lab import (
    LineProbe,
    Surface,
    check_compensatory,
    check_line_monotonic,
    check_parallel,
    decompose_to_univariate,
    demo_noninvariance,
    factorization_ratio_test,
    find_constant_hyperplane,
)
from .io import (
    SimulationSpec,
    load_parameters,
    load_response_matrix,
    parameters_from_fit,
    simulate,
    save_parameters,
    save_response_matrix,
    write_grid_csv,
    write_trace_csv,
)
from .likelihood import PopulationModel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SAMPLING_NOTE = "note: verdicts are sampling based (no violation found at this resolution), not proofs"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text):
    try:
        return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected rows like '1,1;1,-1', got {text!r}") from None


def _common(p, data=False, params=False):
    p.add_argument("--data", type=Path, required=data, help="response matrix CSV")
    p.add_argument("--params", type=Path, required=params, help="parameter file (JSON)")
    p.add_argument("--out", type=Path, help="machine-readable output")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", type=Path, help="JSON file with fit settings")


def build_parser():
    parser = _Parser(prog="mirtlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("version", help="print the version")
    _common(p)

    p = sub.add_parser("simulate", help="simulate responses from a parameter file")
    _common(p, params=True)
    p.add_argument("--n", type=int, required=True, help="number of students")
    p.add_argument("--missing", type=float, default=0.0, help="probability a cell is not administered")
    p.add_argument("--truth", type=Path, help="CSV of the simulated abilities")

    for name, help_text in (("fit-joint", "joint maximum likelihood"), ("fit-marginal", "marginal maximum likelihood (EM)")):
        p = sub.add_parser(name, help=help_text)
        _common(p, data=True)
        p.add_argument("--model", choices=("rasch", "2pl", "3pl", "sp"))
        p.add_argument("--dim", type=int)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--trace", type=Path, help="CSV of iter,loglik")
        if name == "fit-joint":
            p.add_argument("--exclude-flagged", action="store_true", help="drop rows/columns with no finite MLE")
            p.add_argument("--abilities", type=Path, help="CSV of estimated abilities")
        else:
            p.add_argument("--nodes", type=int, help="quadrature nodes per axis")
            p.add_argument("--estimate-population", action="store_true")

    p = sub.add_parser("score", help="ability estimates for every student")
    _common(p, data=True, params=True)
    p.add_argument("--prior", action="store_true", help="MAP with the file's population (default N(0, I))")

    p = sub.add_parser("geometry", help="numerical geometry checks on a response surface")
    gsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = gsub.add_parser("check-monotone")
    _geometry_common(g)
    g.add_argument("--w", type=_vector, help="base point (default origin)")
    g.add_argument("--v", type=_vector, required=True, help="line direction")
    g.add_argument("--lo", type=float, default=-6.0)
    g.add_argument("--hi", type=float, default=6.0)
    g.add_argument("--n", type=int, default=241)
    g.add_argument("--tol", type=float, default=1e-10)
    g = gsub.add_parser("find-hyperplane")
    _geometry_common(g)
    g.add_argument("--w", type=_vector, help="point (default origin)")
    g.add_argument("--tol", type=float, default=1e-6)
    g = gsub.add_parser("check-parallel")
    _geometry_common(g)
    g.add_argument("--points", type=_matrix, help="points as 'x,y;x,y' (default: 10 random points)")
    g.add_argument("--tol", type=float, default=1e-6)
    g = gsub.add_parser("decompose")
    _geometry_common(g)
    g.add_argument("--u", type=_vector, help="transversal direction (default: estimated normal)")
    g.add_argument("--lo", type=float, default=-8.0)
    g.add_argument("--hi", type=float, default=8.0)
    g.add_argument("--n", type=int, default=401)
    g = gsub.add_parser("compensatory")
    _geometry_common(g)
    g.add_argument("--level", type=float, default=0.9)
    g.add_argument("--lo", type=float, default=-4.0)
    g.add_argument("--hi", type=float, default=4.0)
    g = gsub.add_parser("factor-test")
    _geometry_common(g)
    g.add_argument("--lo", type=float, default=-3.0)
    g.add_argument("--hi", type=float, default=3.0)
    g.add_argument("--n", type=int, default=61)
    g.add_argument("--tol", type=float, default=1e-8)
    g = gsub.add_parser("demo-noninvariance")
    _common(g)
    g.add_argument("--a1", type=float, default=1.0)
    g.add_argument("--G", type=_matrix, help="coordinate change rows, default '1,1;1,-1'")
    g.add_argument("--lo", type=float, default=-3.0)
    g.add_argument("--hi", type=float, default=3.0)
    g.add_argument("--n", type=int, default=61)
    g.add_argument("--tol", type=float, default=1e-8)
    return parser


def _geometry_common(g):
    _common(g, params=True)
    g.add_argument("--item", help="item id in the parameter file (default: first item)")


# -- helpers -------------------------------------------------------------------------------


def _load_config(args):
    values = {}
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text())
        except OSError as exc:
            raise DataFormatError(f"{args.config}: cannot open ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.config}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        known = {f.name for f in fields(FitConfig)}
        unknown = set(values) - known
        if unknown:
            raise DataFormatError(f"{args.config}: unknown settings {sorted(unknown)}")
    overrides = {
        "kind": getattr(args, "model", None),
        "dim": getattr(args, "dim", None),
        "max_iter": getattr(args, "max_iter", None),
        "tol": getattr(args, "tol", None),
        "n_nodes": getattr(args, "nodes", None),
        "seed": args.seed,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "exclude_flagged", False):
        values["exclude_flagged"] = True
    if getattr(args, "estimate_population", False):
        values["estimate_population"] = True
    if "kind" not in values:
        raise UsageError("a model kind is required (--model or 'kind' in --config)")
    try:
        return FitConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid fit settings: {exc}") from None


def _pick_item(pf, item_id):
    if item_id is None:
        return pf.items[0], pf.item_ids[0]
    try:
        k = pf.item_ids.index(item_id)
    except ValueError:
        raise DataFormatError(f"item {item_id!r} not found in the parameter file") from None
    return pf.items[k], item_id


def _surface(args):
    pf = load_parameters(args.params)
    item, item_id = _pick_item(pf, args.item)
    return Surface.from_model(item, f"{pf.kind} item {item_id}"), item_id


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(v):
    return np.array2string(np.asarray(v), precision=6, separator=", ")


# -- commands ------------------------------------------------------------------------------


def cmd_version(args, out):
    print(f"mirtlab {__version__}", file=out)
    return EXIT_OK


def cmd_simulate(args, out):
    if args.seed is None:
        raise UsageError("simulate requires --seed")
    if args.out is None:
        raise UsageError("simulate requires --out")

    pf = load_parameters(args.params)
    X, truth = simulate(SimulationSpec(args.n, pf, args.seed, missing_rate=args.missing))
    save_response_matrix(args.out, X)
    if args.truth is not None:
        with args.truth.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["student_id", *[f"theta{k + 1}" for k in range(pf.dim)]])
            for sid, theta in zip(truth.student_ids, truth.thetas):
                writer.writerow([sid, *[repr(float(t)) for t in theta]])
    print(f"simulated {X.shape[0]} students x {X.shape[1]} items (seed {args.seed}) -> {args.out}", file=out)
    return EXIT_OK


def _report_fit(args, result, out, label):
    print(f"{label}: model={result.kind} dim={result.dim} loglik={result.loglik:.6f} "
          f"iterations={result.iterations} converged={result.converged}", file=out)
    for w in result.warnings:
        print(f"warning: {w}", file=out)
    pf = parameters_from_fit(result)
    pf.metadata = {
        "loglik": result.loglik,
        "converged": result.converged,
        "iterations": result.iterations,
        "warnings": result.warnings,
    }
    if args.out is not None:
        save_parameters(args.out, pf)
    if args.trace is not None:
        write_trace_csv(args.trace, result.trace)
    return EXIT_OK if result.converged else EXIT_NUMERIC


def cmd_fit_joint(args, out):
    config = _load_config(args)
    X = load_response_matrix(args.data)
    result = fit_joint(X, config)
    code = _report_fit(args, result, out, "joint fit")
    if args.abilities is not None:
        with args.abilities.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["student_id", "theta"])
            for sid, t in zip(result.student_ids, result.abilities[:, 0]):
                writer.writerow([sid, repr(float(t))])
    return code


def cmd_fit_marginal(args, out):
    config = _load_config(args)
    X = load_response_matrix(args.data)
    return _report_fit(args, fit_marginal_em(X, config), out, "marginal fit")


def cmd_score(args, out):
    pf = load_parameters(args.params)
    X = load_response_matrix(args.data)
    if list(X.item_ids) != list(pf.item_ids):
        missing = [i for i in X.item_ids if i not in pf.item_ids]
        if missing:
            raise DataFormatError(f"items {missing} of the data file are not in the parameter file")
        order = [pf.item_ids.index(i) for i in X.item_ids]
        items = [pf.items[k] for k in order]
    else:
        items = pf.items
    prior = (pf.population or PopulationModel.standard(pf.dim)) if args.prior else None
    rows = []
    n_infinite = 0
    for sid, row in zip(X.student_ids, X.data):
        est = estimate_ability(row, items, prior)
        n_infinite += not est.finite
        rows.append((sid, est))
    label = "MAP" if prior is not None else "MLE"
    print(f"scored {len(rows)} students ({label}); {n_infinite} without a finite estimate", file=out)
    if args.out is not None:
        with args.out.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            dims = range(pf.dim)
            writer.writerow(["student_id", *[f"theta{k + 1}" for k in dims], *[f"se{k + 1}" for k in dims], "finite"])
            for sid, est in rows:
                se = est.standard_errors if est.finite else np.full(pf.dim, np.inf)
                writer.writerow([sid, *[repr(float(t)) for t in est.theta_hat], *[repr(float(s)) for s in se], int(est.finite)])
    return EXIT_OK


def cmd_geometry(args, out):
    handler = {
        "check-monotone": _geo_monotone,
        "find-hyperplane": _geo_hyperplane,
        "check-parallel": _geo_parallel,
        "decompose": _geo_decompose,
        "compensatory": _geo_compensatory,
        "factor-test": _geo_factor,
        "demo-noninvariance": _geo_demo,
    }[args.action]
    return handler(args, out)


def _geo_monotone(args, out):
    f, item_id = _surface(args)
    w = np.zeros(f.dim) if args.w is None else args.w
    verdict = check_line_monotonic(f, LineProbe(w, args.v, args.lo, args.hi, args.n), args.tol)
    peak = verdict.peak
    print(f"item {item_id}: monotone={verdict.monotone} direction={verdict.direction.value} "
          f"worst_violation={verdict.worst_violation:.3g} witness={verdict.witness} "
          f"max={peak[1]:.12g} at lambda={peak[0]:.6g}", file=out)
    print(SAMPLING_NOTE, file=out)
    if args.out is not None:
        if args.out.suffix == ".csv":
            with args.out.open("w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["lambda", "f"])
                for lam, v in zip(verdict.lambdas, verdict.values):
                    writer.writerow([repr(float(lam)), repr(float(v))])
        else:
            _write_json(args.out, {
                "monotone": verdict.monotone, "direction": verdict.direction.value,
                "worst_violation": verdict.worst_violation, "witness": list(verdict.witness),
                "peak": {"lambda": peak[0], "value": peak[1]},
            })
    return EXIT_OK


def _geo_hyperplane(args, out):
    f, item_id = _surface(args)
    w = np.zeros(f.dim) if args.w is None else args.w
    try:
        est = find_constant_hyperplane(f, w, args.tol)
    except HyperplaneVerificationError as exc:
        print(f"item {item_id}: verification FAILED, worst deviation {exc.worst_deviation:.3g} "
              f"for candidate normal {_fmt(exc.normal)}", file=out)
        if args.out is not None:
            _write_json(args.out, {"verified": False, "worst_deviation": exc.worst_deviation, "normal": exc.normal})
        return EXIT_NUMERIC
    print(f"item {item_id}: normal={_fmt(est.normal)} worst_deviation={est.worst_deviation:.3g}", file=out)
    print(SAMPLING_NOTE, file=out)
    if args.out is not None:
        _write_json(args.out, {"verified": True, "normal": est.normal, "kernel": est.kernel.T,
                               "worst_deviation": est.worst_deviation})
    return EXIT_OK


def _geo_parallel(args, out):
    f, item_id = _surface(args)
    if args.points is None:
        rng = np.random.default_rng(0 if args.seed is None else args.seed)
        points = rng.uniform(-2, 2, size=(10, f.dim))
    else:
        points = args.points
    report = check_parallel(f, points, args.tol)
    print(f"item {item_id}: parallel={report.parallel} max_angle={report.max_angle:.3g} rad "
          f"over {len(points)} points", file=out)
    print(SAMPLING_NOTE, file=out)
    if args.out is not None:
        _write_json(args.out, {"parallel": report.parallel, "max_angle": report.max_angle,
                               "points": points, "normals": report.normals})
    return EXIT_OK


def _geo_decompose(args, out):
    f, item_id = _surface(args)
    if args.u is None:
        u = find_constant_hyperplane(f, np.zeros(f.dim), verify=False).normal
    else:
        u = args.u
    dec = decompose_to_univariate(f, u, args.lo, args.hi, args.n, seed=args.seed or 0)
    print(f"item {item_id}: residual={dec.residual:.3g} normal={_fmt(dec.normal)} u={_fmt(dec.u)}", file=out)
    if args.out is not None:
        if args.out.suffix == ".csv":
            with args.out.open("w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["mu", "f"])
                for m, v in zip(dec.mu, dec.link_values):
                    writer.writerow([repr(float(m)), repr(float(v))])
        else:
            _write_json(args.out, {"residual": dec.residual, "normal": dec.normal, "u": dec.u,
                                   "mu": dec.mu, "link": dec.link_values})
    return EXIT_OK


def _geo_compensatory(args, out):
    f, item_id = _surface(args)
    report = check_compensatory(f, args.lo, args.hi, args.level)
    print(f"item {item_id}: compensatory={report.compensatory} at level {args.level}", file=out)
    for d, wpt in report.witnesses.items():
        print(f"  axis {d + 1}: " + ("no witness" if wpt is None else f"witness {_fmt(wpt)}"), file=out)
    if args.out is not None:
        _write_json(args.out, {"compensatory": report.compensatory,
                               "witnesses": {str(d + 1): w for d, w in report.witnesses.items()}})
    return EXIT_OK


def _emit_factor_report(args, report, out, label):
    print(f"{label}: factorizable={report.factorizable} max_deviation={report.max_deviation:.6g} "
          f"median_ratio={report.reference:.12g}", file=out)
    if args.out is not None:
        if args.out.suffix == ".csv":
            xx, yy = np.meshgrid(report.x, report.y, indexing="ij")
            write_grid_csv(args.out, np.column_stack([xx.ravel(), yy.ravel()]), report.surface_values.ravel())
        else:
            _write_json(args.out, {"factorizable": report.factorizable, "max_deviation": report.max_deviation,
                                   "median_ratio": report.reference, "x": report.x, "y": report.y,
                                   "ratio": report.ratio_values})
    return EXIT_OK


def _geo_factor(args, out):
    f, item_id = _surface(args)
    report = factorization_ratio_test(f, args.lo, args.hi, args.n, args.tol)
    return _emit_factor_report(args, report, out, f"item {item_id}")


def _geo_demo(args, out):
    report = demo_noninvariance(args.a1, args.G, args.lo, args.hi, args.n, args.tol)
    return _emit_factor_report(args, report, out, f"independent model a=({args.a1:g}, {args.a1:g}) in rotated coordinates")


COMMANDS = {
    "version": cmd_version,
    "simulate": cmd_simulate,
    "fit-joint": cmd_fit_joint,
    "fit-marginal": cmd_fit_marginal,
    "score": cmd_score,
    "geometry": cmd_geometry,
}


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    except ExistenceError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_NUMERIC
    except (ConvergenceError, LikelihoodDomainError, HyperplaneVerificationError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    except (DataFormatError, DimensionError, DegenerateModelError, SurfaceError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=err)
        return EXIT_DATA


def main():
    sys.exit(run())
