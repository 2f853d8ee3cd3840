"""Command-line front end: CSV out, JSON-lines traces, exit code 2 on constraint
errors and 3 on oracle mismatch."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from contextlib import contextmanager

import numpy as np

from . import analytic
from .analytic import SCHEMES, ConstraintError
from .engine import OracleMismatch, balls_bins, execute, verify_against_analytic
from .mac import MacProblem, full_problem, generalized_mac, random_targets, recursive_mac
from .netmodel import generate_network, ideal_network
from .sweep import SweepSpec, build_trace, fit_exponent, geometric_grid, run_sweep, tradeoff_curve, write_csv
from .trace import write_jsonl

EXIT_CONSTRAINT = 2
EXIT_MISMATCH = 3


def read_config(path: str) -> dict:
    """`key = value` lines; '#' starts a comment. Keys use the long flag names."""
    out = {}
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{k}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(",", " ").split()]


def _n_grid(args) -> list[int]:
    if args.n_grid:
        g = str(args.n_grid)
        if ":" in g:  # lo:hi doubles from lo to hi
            lo, hi = (int(v) for v in g.split(":"))
            return geometric_grid(lo, hi)
        return _ints(g)
    return [int(args.n)]


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _spec(args, mode: str) -> SweepSpec:
    return SweepSpec(args.scheme, _n_grid(args), h=args.h, Q=args.q, b=args.b, seeds=range(args.seeds),
                     mode=mode, reuse=args.reuse, instance=args.instance, restricted=args.restricted,
                     m1=args.m1, m2=args.m2, h1=args.h1, h2=args.h2)


def cmd_analytic(args) -> int:
    rows = run_sweep(_spec(args, "analytic"))
    with _output(args.out) as fh:
        write_csv(rows, fh)
    return 0


def _predicted(spec: SweepSpec, n: int, p: dict):
    Q = spec.Q
    if spec.scheme == "threePhase":
        return "exact", analytic.three_phase_slots(n, p["M1"], Q, exact=True)
    if spec.scheme == "hLevel":
        return "exact", analytic.h_level_slots(n, p["ms"], Q, exact=True)
    if spec.scheme == "modifiedHier":
        return "exact", analytic.modified_hier_slots(n, p["M1"], Q, spec.h)
    if spec.scheme == "session":
        return "bounded", analytic.session_slots(n, p["M1"], Q, p["active"])
    return "bounded", analytic.session_hier_slots(n, p["M1"], p["M2"], Q, p["h1"], p["h2"], p["active"], check=False)


def cmd_trace(args) -> int:
    spec = _spec(args, "trace")
    rows = []
    for n in spec.n_grid:
        for seed in spec.seeds:
            tr, p = build_trace(spec, n, seed)
            m = execute(tr, n=n)
            rows.append({"scheme": spec.scheme, "mode": "trace", "n": n, "seed": seed, "h": spec.h, "Q": spec.Q,
                         "b": spec.b, "reuse": spec.reuse, "M1": p["M1"], "M2": p.get("M2", 0), **m.row()})
            if args.trace_out:
                with open(args.trace_out, "w") as fh:
                    write_jsonl(tr, fh, expand=args.expand)
            if args.verify:
                mode, pred = _predicted(spec, n, p)
                report = verify_against_analytic(tr, pred, mode, args.tolerance)
                print(report.describe(), file=sys.stderr)
                if not report.ok:
                    raise OracleMismatch(report)
    with _output(args.out) as fh:
        write_csv(rows, fh)
    return 0


def cmd_mac(args) -> int:
    rows = []
    for m in _n_grid(args):
        for seed in range(args.seeds):
            net = ideal_network(m, seed=seed) if args.instance == "ideal" else generate_network(m, seed=seed)
            nodes = np.arange(m)
            if args.targets and args.targets < m:
                prob = MacProblem(nodes, random_targets(nodes, args.targets, np.random.default_rng(seed)))
                sched = generalized_mac(prob, args.h, net, args.reuse)
            else:
                sched = recursive_mac(full_problem(nodes), args.h, net, args.reuse)
            if args.verify:
                sched.verify()
            if args.trace_out:
                with open(args.trace_out, "w") as fh:
                    write_jsonl(sched.trace, fh, expand=args.expand)
            closed = analytic.mac_slots(m, args.q, args.h) if sched.problem.full else ""
            rows.append({"m": m, "seed": seed, "levels": args.h, "A": sched.problem.A,
                         "totalSlots": sched.total_slots, "closedForm": closed,
                         "claimedBound": sched.claimed_bound})
    with _output(args.out) as fh:
        write_csv(rows, fh)
    return 0


def cmd_bins(args) -> int:
    f = args.f if args.f is not None else args.n
    report = balls_bins(args.n, f, args.trials, args.seed)
    with _output(args.out) as fh:
        report.write_csv(fh)
    bound = 3 * math.log2(args.n) if args.n > 1 else 0
    print(f"max load <= 3 log2 n ({bound:g}) in {report.fraction_max_below(bound):.4f} of trials; "
          f"loads in [f/2n, 2f/n] in {report.fraction_within(f / (2 * args.n), 2 * f / args.n):.4f}",
          file=sys.stderr)
    return 0


def cmd_tradeoff(args) -> int:
    b_grid = _floats(args.b_grid) if args.b_grid else [args.b]
    rows = tradeoff_curve(b_grid, int(args.n), args.q, args.mode, seed=args.seed, reuse=args.reuse)
    with _output(args.out) as fh:
        write_csv(rows, fh)
    return 0


def cmd_fit(args) -> int:
    with open(args.input) as fh:
        rows = list(csv.DictReader(fh))
    fit = fit_exponent(rows, args.x, args.y, args.burn_in)
    print(f"slope={fit.slope!r} intercept={fit.intercept!r} r2={fit.r2!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hiercoop", description="Hierarchical cooperation scaling simulator.")
    ap.add_argument("--config", help="file of 'key = value' defaults; flags override")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scheme=True):
        p.add_argument("--n", type=int, default=1024)
        p.add_argument("--n-grid", help="'256 1024 4096' or lo:hi (doubling)")
        if scheme:
            p.add_argument("--scheme", choices=SCHEMES, default="threePhase")
        p.add_argument("--h", type=int, default=1)
        p.add_argument("--h1", type=int)
        p.add_argument("--h2", type=int)
        p.add_argument("--q", type=int, default=2)
        p.add_argument("--b", type=float, default=0.5)
        p.add_argument("--m1", type=int)
        p.add_argument("--m2", type=int)
        p.add_argument("--seeds", type=int, default=1, help="number of seeds, 0..k-1")
        p.add_argument("--reuse", type=int, default=9)
        p.add_argument("--instance", choices=("random", "ideal"), default="random")
        p.add_argument("--restricted", action="store_true")
        p.add_argument("--out", default="-")
        p.add_argument("--trace-out")
        p.add_argument("--expand", action="store_true", help="unroll recursive events in --trace-out")

    p = sub.add_parser("analytic", help="closed-form metrics over an n grid")
    common(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("trace", help="build and execute slot-by-slot schedules")
    common(p)
    p.add_argument("--verify", action="store_true", help="compare against the closed form")
    p.add_argument("--tolerance", type=float, default=0.0)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("mac", help="network multiple-access schedules (levels = --h)")
    common(p, scheme=False)
    p.add_argument("--targets", type=int, help="target count A for the generalized problem")
    p.add_argument("--verify", action="store_true", help="exhaustive delivery check")
    p.set_defaults(func=cmd_mac)

    p = sub.add_parser("bins", help="balls-into-bins load statistics")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--f", type=int)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bins)

    p = sub.add_parser("tradeoff", help="(b, T, D) points of the throughput-delay curve")
    p.add_argument("--n", type=int, default=2 ** 16)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--b-grid", help="e.g. '0.3 0.5 0.67 0.75'")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--mode", choices=("analytic", "trace"), default="analytic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reuse", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("fit", help="log-log slope of a CSV column")
    p.add_argument("input")
    p.add_argument("--x", default="n")
    p.add_argument("--y", default="throughput")
    p.add_argument("--burn-in", type=int, default=0)
    p.set_defaults(func=cmd_fit)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return ap.parse_args(argv)
    conf = read_config(known.config)
    args = ap.parse_args(argv)
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, raw in conf.items():
        if key in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif current is None and key in ("m1", "m2", "h1", "h2", "f", "targets"):
            value = int(raw)
        else:
            value = raw
        setattr(args, key, value)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = _apply_config(ap, argv)
    try:
        return args.func(args)
    except ConstraintError as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except OracleMismatch as exc:
        print(f"oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
