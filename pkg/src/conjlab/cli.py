"""``conjlab`` command line.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error,
10 a conjectured floor was violated (the result is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import fermat, geom2d, geom3d, optimizer, store
from .errors import ConjlabError, StoreError, UnknownColumn, ValidationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_COUNTEREXAMPLE = 10

log = logging.getLogger("conjlab")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _int_range(text: str) -> range:
    """``LO..HI`` (inclusive) or a single integer."""
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            return range(int(text), int(text) + 1)
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return range(lo_i, hi_i + 1)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# -- output helpers ---------------------------------------------------------------

def _flatten(obj, prefix="") -> dict:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2))
    elif fmt == "text":
        for k, v in _flatten(payload).items():
            if isinstance(v, list):
                v = ", ".join(json.dumps(x) if isinstance(x, (dict, list)) else str(x) for x in v)
            print(f"{k}: {v}")
    else:
        flat = _flatten(payload)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(flat.keys())
        w.writerow([store._cell(v) for v in flat.values()])
        sys.stdout.write(buf.getvalue())


def _write_fresh(path, records: Sequence[dict]) -> None:
    rf = store.RecordFile(path)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    rf.truncate()
    for r in records:
        rf.append(r)


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


# -- geom ------------------------------------------------------------------------------

def cmd_geom_ratio(args) -> int:
    poly = geom2d.load_polygon(_load_json(args.polygon))
    probe = geom2d.Point2.parse(args.point)
    report = geom2d.em_ratio(poly, probe, args.alpha)
    pedal = geom2d.oblique_pedal(poly, probe, args.alpha)
    payload = report.to_json()
    payload["vertex_distances"] = geom2d.vertex_distances(poly, probe)
    payload["pedal"] = [
        {"side": e.side_index, "foot": e.foot.as_list(), "distance": e.distance,
         "on_segment": e.on_segment}
        for e in pedal.entries
    ]
    _emit(payload, args.format)
    return EXIT_OK


def _cfg(args) -> optimizer.OptimizerConfig:
    return optimizer.OptimizerConfig(
        seed=args.seed, restarts=args.restarts,
        inner_iterations=args.inner_iters, outer_iterations=args.outer_iters,
    )


def _finish_estimate(est: optimizer.ConstantEstimate, args, started: float) -> int:
    if not args.no_timestamps:
        est.timing = {"started": started, "elapsed_s": time.time() - started}
    payload = est.to_json()
    if args.out:
        _write_fresh(args.out, [payload])
    _emit(payload, args.format)
    if est.counterexample:
        print(f"COUNTEREXAMPLE: min ratio {est.min_ratio!r} is below the conjectured floor "
              f"{est.floor!r}", file=sys.stderr)
        return EXIT_COUNTEREXAMPLE
    return EXIT_OK


def cmd_geom_estimate(args) -> int:
    started = time.time()
    est = optimizer.estimate_constant_2d(args.n, args.alpha, _cfg(args))
    return _finish_estimate(est, args, started)


def _polyhedron(args) -> geom3d.Polyhedron3D:
    if args.fixture:
        return geom3d.FIXTURES[args.fixture]()
    return geom3d.load_polyhedron(_load_json(args.mesh))


def cmd_geom3_ratio(args) -> int:
    poly = _polyhedron(args)
    probe = geom3d.Point3.parse(args.point)
    report = geom3d.em_ratio_3d(poly, probe, args.target)
    payload = report.to_json()
    payload["vertex_distances"] = geom3d.vertex_distances_3d(poly, probe)
    if args.target == "faces":
        payload["pedal"] = [
            {"face": f.face_index, "foot": f.foot.as_list(), "distance": f.distance,
             "inside_face": f.inside_face}
            for f in geom3d.face_pedal_details(poly, probe)
        ]
    else:
        payload["pedal"] = [
            {"edge": list(e), "distance": d}
            for e, d in zip(poly.edges, geom3d.edge_pedal(poly, probe))
        ]
    _emit(payload, args.format)
    return EXIT_OK


def cmd_geom3_estimate(args) -> int:
    started = time.time()
    mesh = None
    if args.family == "user_mesh":
        if not args.mesh:
            raise ValidationError("--family user_mesh needs --mesh FILE")
        mesh = geom3d.load_polyhedron(_load_json(args.mesh))
    est = optimizer.estimate_constant_3d(args.family, args.target, _cfg(args), mesh=mesh)
    return _finish_estimate(est, args, started)


# -- fermat ------------------------------------------------------------------------------

def _policy(args) -> fermat.Policy:
    return fermat.Policy(max_bits=args.max_bits, trial_bound=args.trial_bound,
                         mr_rounds=args.mr_rounds)


def cmd_fermat_test(args) -> int:
    t = fermat.validate_triplet(args.a, args.b, args.c)
    policy = _policy(args)
    v = fermat.evaluate_k(t, args.k, policy)
    reason = fermat.algebraic_filter(t, args.k)
    payload = {"a": t.a, "b": t.b, "c": t.c, **v.to_json(),
               "filter": reason.to_json() if reason else None,
               "policy": policy.to_json()}
    _emit(payload, args.format)
    return EXIT_OK


def cmd_fermat_search(args) -> int:
    t = fermat.validate_triplet(args.a, args.b, args.c)
    rec = fermat.search(t, args.kmax, _policy(args), timestamps=not args.no_timestamps)
    payload = rec.to_json()
    if args.out:
        _write_fresh(args.out, [payload])
    _emit(payload, args.format)
    return EXIT_OK


def cmd_fermat_sweep(args) -> int:
    policy = _policy(args)
    done: set = set()
    if args.resume:
        rf = store.RecordFile.open(args.out)
        if rf.quarantined:
            log.warning("quarantined %d bytes of a partial record to %s.partial",
                        len(rf.quarantined), args.out)
        for r in rf.records:
            if r.get("k_max") != args.kmax or r.get("policy") != policy.to_json():
                raise ValidationError(
                    f"{args.out} holds records from a different k_max or policy; cannot resume"
                )
            done.add((r["a"], r["b"], r["c"]))
    else:
        rf = store.RecordFile(args.out)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        rf.truncate()
    summary = fermat.SweepSummary()
    for rec in fermat.sweep(args.a, args.b, args.c, args.kmax, policy,
                            sink=lambda r: rf.append(r.to_json()), done=done,
                            timestamps=not args.no_timestamps, summary=summary):
        log.info("(%d, %d, %d): k0=%s streak=%d", rec.a, rec.b, rec.c, rec.k0, rec.streak_length)
    for s in summary.skipped:
        print(f"skipped ({s['a']}, {s['b']}, {s['c']}): {s['reason']}", file=sys.stderr)
    _emit({"out": str(args.out), "emitted": summary.emitted,
           "already_done": summary.resumed_past, "skipped": len(summary.skipped)}, args.format)
    return EXIT_OK


# -- report ----------------------------------------------------------------------------------

def cmd_report(args) -> int:
    records = store.read_records(args.input)
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    text = store.export_csv(records, columns, crlf=args.crlf)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        from . import plotting

        try:
            plotting.plot_records(records, args.plot)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------

def _add_format(p) -> None:
    p.add_argument("--format", choices=("json", "text", "csv"), default="json",
                   help="stdout format")


def _add_optimizer_flags(p) -> None:
    d = optimizer.OptimizerConfig()
    p.add_argument("--seed", type=int, default=d.seed, help="base RNG seed")
    p.add_argument("--restarts", type=_positive_int, default=d.restarts, help="outer restarts")
    p.add_argument("--inner-iters", type=_positive_int, default=d.inner_iterations,
                   help="Nelder-Mead iterations per probe search")
    p.add_argument("--outer-iters", type=_positive_int, default=d.outer_iterations,
                   help="Nelder-Mead iterations per shape refinement")
    p.add_argument("--out", help="write the estimate record (JSONL) here")
    p.add_argument("--no-timestamps", action="store_true",
                   help="omit timing so reruns are byte-identical")
    _add_format(p)


def _add_policy_flags(p) -> None:
    d = fermat.DEFAULT_POLICY
    p.add_argument("--max-bits", type=_positive_int, default=d.max_bits,
                   help="skip values whose predicted size exceeds this many bits")
    p.add_argument("--trial-bound", type=int, default=d.trial_bound,
                   help="trial-divide by primes up to this bound")
    p.add_argument("--mr-rounds", type=int, default=d.mr_rounds,
                   help="extra Miller-Rabin rounds above the deterministic range")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conjlab", formatter_class=_Formatter,
        description="Erdős–Mordell constant estimation and generalized Fermat prime search.",
        epilog="exit codes: 0 ok, 2 usage, 3 validation, 4 I/O, 10 counterexample found",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    geom = sub.add_parser("geom", help="planar polygons", formatter_class=_Formatter)
    gsub = geom.add_subparsers(dest="action", required=True)
    p = gsub.add_parser("ratio", help="ratio for one polygon and probe", formatter_class=_Formatter)
    p.add_argument("--polygon", required=True, help='JSON file {"vertices": [[x, y], ...]}')
    p.add_argument("--point", required=True, help="probe as X,Y")
    p.add_argument("--alpha", type=float, default=90.0, help="projection angle in degrees")
    _add_format(p)
    p.set_defaults(func=cmd_geom_ratio)
    p = gsub.add_parser("estimate", help="estimate the constant for n-gons",
                        formatter_class=_Formatter)
    p.add_argument("--n", type=int, required=True, help="vertex count")
    p.add_argument("--alpha", type=float, default=90.0, help="projection angle in degrees")
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_geom_estimate)

    geom3 = sub.add_parser("geom3", help="convex polyhedra", formatter_class=_Formatter)
    g3sub = geom3.add_subparsers(dest="action", required=True)
    p = g3sub.add_parser("ratio", help="ratio for one polyhedron and probe",
                         formatter_class=_Formatter)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", choices=sorted(geom3d.FIXTURES), help="built-in solid")
    src.add_argument("--mesh", help='JSON file {"vertices": [...], "faces": [...]}')
    p.add_argument("--point", required=True, help="probe as X,Y,Z")
    p.add_argument("--target", choices=geom3d.TARGETS, default="faces",
                   help="pedal distances to face planes or edge lines")
    _add_format(p)
    p.set_defaults(func=cmd_geom3_ratio)
    p = g3sub.add_parser("estimate", help="estimate the constant for tetrahedra",
                         formatter_class=_Formatter)
    p.add_argument("--family", choices=("tetrahedron", "user_mesh"), default="tetrahedron",
                   help="shape family")
    p.add_argument("--mesh", help="mesh file for --family user_mesh")
    p.add_argument("--target", choices=geom3d.TARGETS, default="faces",
                   help="pedal distances to face planes or edge lines")
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_geom3_estimate)

    ferm = sub.add_parser("fermat", help="P(k) = a^(b^k) + c", formatter_class=_Formatter)
    fsub = ferm.add_subparsers(dest="action", required=True)
    p = fsub.add_parser("test", help="classify a single P(k)", formatter_class=_Formatter)
    for name in ("a", "b", "c", "k"):
        p.add_argument(f"--{name}", type=int, required=True, help=f"value of {name}")
    _add_policy_flags(p)
    _add_format(p)
    p.set_defaults(func=cmd_fermat_test)
    p = fsub.add_parser("search", help="k0, streak and prime positions for one triplet",
                        formatter_class=_Formatter)
    for name in ("a", "b", "c"):
        p.add_argument(f"--{name}", type=int, required=True, help=f"value of {name}")
    p.add_argument("--kmax", type=int, required=True, help="largest k scanned")
    _add_policy_flags(p)
    p.add_argument("--out", help="write the record (JSONL) here")
    p.add_argument("--no-timestamps", action="store_true",
                   help="omit timing so reruns are byte-identical")
    _add_format(p)
    p.set_defaults(func=cmd_fermat_search)
    p = fsub.add_parser("sweep", help="search every valid triplet in a box",
                        formatter_class=_Formatter)
    for name in ("a", "b", "c"):
        p.add_argument(f"--{name}", type=_int_range, required=True, help=f"{name} as LO..HI")
    p.add_argument("--kmax", type=int, required=True, help="largest k scanned")
    _add_policy_flags(p)
    p.add_argument("--out", required=True, help="JSONL record file")
    p.add_argument("--resume", action="store_true", help="skip triplets already in --out")
    p.add_argument("--no-timestamps", action="store_true",
                   help="omit timing so reruns are byte-identical")
    _add_format(p)
    p.set_defaults(func=cmd_fermat_sweep)

    p = sub.add_parser("report", help="export records to CSV (and a figure)",
                       formatter_class=_Formatter)
    p.add_argument("--in", dest="input", required=True, help="JSONL record file")
    p.add_argument("--format", choices=("csv",), default="csv", help="table format")
    p.add_argument("--columns", required=True, help="comma-separated dotted field paths")
    p.add_argument("--out", help="CSV destination (default stdout)")
    p.add_argument("--crlf", action="store_true", help="CRLF line endings")
    p.add_argument("--plot", help="also render a figure (png, pdf, svg) to this path")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValidationError, UnknownColumn) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StoreError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConjlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
