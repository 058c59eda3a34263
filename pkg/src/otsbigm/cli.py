"""Command-line front end: ``otsbigm {bigm,solve,bench,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import ExperimentSpec, rows_to_csv, run_experiment
from .bigm import BigMVector, KnnParams, KspParams, compute_bigm, validate_bigm
from .grid import Network, load_case, parse_network
from .milp import DEFAULT_GAP
from .ots import DEFAULT_L, solve_ots


def _network(ref: str, default_capacity: float) -> Network:
    path = Path(ref)
    if path.exists():
        fmt = "json" if path.suffix == ".json" else "matpower"
        return parse_network(path.read_text(), fmt, default_capacity=default_capacity,
                             name=path.stem)
    return load_case(ref)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_bigm(args) -> int:
    net = _network(args.case, args.default_capacity)
    ksp = KspParams(args.k_max, args.e_max, args.l, args.price_convention)
    knn = KnnParams(args.k, args.h, args.s, args.r, args.seed)
    M = compute_bigm(net, args.method, ksp, knn)
    text = M.to_csv(net) if args.out and args.out.endswith(".csv") else M.to_json()
    _emit(text, args.out)
    return 0


def cmd_solve(args) -> int:
    net = _network(args.case, args.default_capacity)
    M = BigMVector.from_json(Path(args.bigm).read_text()) if args.bigm \
        else compute_bigm(net, "lwp")
    res = solve_ots(net, M, args.L, args.time_limit, args.gap, log_every=args.log_every)
    if res is None:
        print("infeasible: no topology within the switching budget serves the load",
              file=sys.stderr)
        return 1
    _emit(res.to_json(), args.out)
    return 0


def cmd_bench(args) -> int:
    spec = ExperimentSpec.from_json(Path(args.spec).read_text()) if args.spec else ExperimentSpec()
    result = run_experiment(spec, workers=args.workers)
    _emit(rows_to_csv(result.rows), args.out)
    print(json.dumps(result.summary, indent=1), file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    net = _network(args.case, args.default_capacity)
    M = BigMVector.from_json(Path(args.bigm).read_text()) if args.bigm \
        else compute_bigm(net, "lwp")
    rows = validate_bigm(net, M)
    print("branch,from,to,M,M_opt,ratio,flagged")
    for r in rows:
        a, b = net.branch_by_id[r.branch].ends
        print(f"{r.branch},{a},{b},{r.M:.10g},{r.M_opt:.10g},{r.ratio:.6g},{int(r.flagged)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otsbigm", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_case(p):
        p.add_argument("--case", default="ieee14",
                       help="bundled case name (fig1, ieee14, case14) or a .json/.m file")
        p.add_argument("--default-capacity", type=float, default=27.0,
                       help="MW rating for branches without one")
        p.add_argument("--out", help="output file (stdout if omitted)")
        return p

    p = with_case(sub.add_parser("bigm", help="compute big-M values"))
    p.add_argument("--method", choices=["lwp", "ksp", "knn"], default="lwp")
    p.add_argument("--k_max", type=int, default=5)
    p.add_argument("--e_max", type=int, default=3)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--price-convention", choices=["sensitivity", "lmp"], default="sensitivity")
    p.add_argument("--k", type=int, default=2, help="kNN hop radius")
    p.add_argument("--h", type=float, default=0.2, help="kNN sample fraction")
    p.add_argument("--s", type=float, default=10.0, help="kNN safety multiplier")
    p.add_argument("--r", type=int, default=30, help="kNN iterations")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bigm)

    p = with_case(sub.add_parser("solve", help="solve the switching MILP"))
    p.add_argument("--bigm", help="big-M JSON from the bigm command (LWP if omitted)")
    p.add_argument("--L", type=int, default=DEFAULT_L)
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--gap", type=float, default=DEFAULT_GAP)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a batch experiment")
    p.add_argument("--spec", help="experiment spec JSON")
    p.add_argument("--out", help="CSV output file")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = with_case(sub.add_parser("validate", help="compare big-M values with enumeration"))
    p.add_argument("--bigm", help="big-M JSON (LWP if omitted)")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
