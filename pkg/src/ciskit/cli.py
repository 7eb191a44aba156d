"""Command-line interface.

Subcommands: synth, project, filter, box, bench, maximal, check.
Exit codes: 0 success, 1 parse/usage errors, 2 empty implicit set,
3 projection explosion, 4 initially infeasible filter, 5 shrinking safe set.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys

import numpy as np

from .bench import SUITES
from .config import DEFAULT
from .invariance import (BoxInfeasible, LassoSpec, explicit_rcis, hierarchy,
                         implicit_rcis, invariance_check, safe_box)
from .io import (Problem, ProblemFormatError, hyperbox_to_dict,
                 implicit_rcis_from_dict, implicit_rcis_to_dict, load_json,
                 load_problem, save_json)
from .oracle import maximal_rcis, weak_completeness
from .polytope import HPolytope, HyperBox, ProjectionExplosion
from .runtime import (CORRECTED, PASS, FilterState, InitiallyInfeasible,
                      SafeSetShrank, filter_step)
from .systems import SafeSet, nilpotentize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_EMPTY = 2
EXIT_EXPLOSION = 3
EXIT_INFEASIBLE_START = 4
EXIT_SHRANK = 5


def _tols(args):
    tols = DEFAULT
    if getattr(args, "tol_feas", None) is not None:
        tols = tols.with_(feas=args.tol_feas)
    return tols


def _prepare(problem: Problem, tols):
    """Apply the deadbeat pre-feedback when the plant is not nilpotent."""
    sys = problem.system
    if sys.is_nilpotent():
        return sys, problem.safe, None
    sysn, safen, K = nilpotentize(sys, problem.safe, tols)
    return sysn, safen, K


def _spec_from_args(problem: Problem, args, m: int):
    if getattr(args, "tau", None) is not None or getattr(args, "lam", None) is not None:
        tau = args.tau if args.tau is not None else 0
        lam = args.lam if args.lam is not None else 1
        return LassoSpec(int(tau), int(lam), m), None
    if getattr(args, "q", None) is not None:
        return None, int(args.q)
    if problem.spec is not None:
        return problem.spec, None
    if problem.q is not None:
        return None, problem.q
    return LassoSpec(0, 1, m), None


def cmd_synth(args) -> int:
    tols = _tols(args)
    problem = load_problem(args.file)
    sys, safe, K = _prepare(problem, tols)
    spec, q = _spec_from_args(problem, args, sys.m)
    out_prefix = args.json_out or "rcis"

    def emit(ir, path):
        d = implicit_rcis_to_dict(ir)
        if K is not None:
            d["feedback_gain"] = K.tolist()
        save_json(d, path)
        print(f"{path}: rows={ir.polytope.nrows} blocks={ir.num_blocks} "
              f"empty={ir.is_empty(tols)}")

    if q is not None:
        comps, union = hierarchy(sys, safe, q, tols)
        for i, comp in enumerate(comps):
            emit(comp, f"{out_prefix}.comp{i}.json")
        if all(c.is_empty(tols) for c in comps):
            print("all hierarchy components are empty")
            return EXIT_EMPTY
        return EXIT_OK

    ir = implicit_rcis(sys, safe, spec, tols)
    emit(ir, f"{out_prefix}.json")
    if ir.is_empty(tols):
        print("implicit set is empty")
        return EXIT_EMPTY
    if args.explicit:
        try:
            ex = explicit_rcis(ir, tols)
        except ProjectionExplosion as exc:
            print(f"projection aborted: {exc}", file=_sys.stderr)
            return EXIT_EXPLOSION
        save_json(ex.to_dict(), f"{out_prefix}.explicit.json")
        print(f"{out_prefix}.explicit.json: rows={ex.nrows}")
    return EXIT_OK


def cmd_project(args) -> int:
    tols = _tols(args)
    d = load_json(args.rcis)
    poly = HPolytope.from_dict(d["polytope"])
    n = int(d["n"])
    try:
        ex = poly.project(n, tols=tols)
    except ProjectionExplosion as exc:
        print(f"projection aborted: {exc}", file=_sys.stderr)
        return EXIT_EXPLOSION
    path = args.json_out or "explicit.json"
    save_json(ex.to_dict(), path)
    print(f"{path}: rows={ex.nrows} empty={ex.is_empty(tols)}")
    return EXIT_OK


def cmd_maximal(args) -> int:
    tols = _tols(args)
    problem = load_problem(args.file)
    sys, safe, _ = _prepare(problem, tols)
    C, converged = maximal_rcis(sys, safe, max_iters=args.max_iters, tols=tols)
    path = args.json_out or "maximal.json"
    save_json({"polytope": C.to_dict(), "converged": bool(converged)}, path)
    print(f"{path}: rows={C.nrows} converged={converged} "
          f"empty={C.is_empty(tols)}")
    return EXIT_OK


def cmd_check(args) -> int:
    tols = _tols(args)
    problem = load_problem(args.file)
    sys, safe, _ = _prepare(problem, tols)
    if args.weak:
        res = weak_completeness(sys, safe, tols)
        print(f"weak completeness: both_empty={res.both_empty} "
              f"fixed_point={res.fixed_point.feasible} "
              f"interior={res.fixed_point.interior}")
        return EXIT_OK
    C = HPolytope.from_dict(load_json(args.set))
    rep = invariance_check(sys, safe, C, samples=args.samples,
                           seed=args.seed, tols=tols)
    print(f"invariance check: {rep.violations} violations / {rep.total} samples")
    return EXIT_OK if rep.ok else EXIT_EMPTY


def cmd_box(args) -> int:
    tols = _tols(args)
    problem = load_problem(args.file)
    sys, safe, _ = _prepare(problem, tols)
    spec, _ = _spec_from_args(problem, args, sys.m)
    if spec is None:
        spec = LassoSpec(0, 1, sys.m)
    Sx = safe.project_states(tols)
    # input bounds: the bounding box of the input coordinates of the safe set
    u_lo, u_hi = [], []
    for j in range(safe.m):
        e = np.zeros(safe.n + safe.m)
        e[safe.n + j] = 1.0
        u_hi.append(safe.polytope.support(e, tols))
        u_lo.append(-safe.polytope.support(-e, tols))
    input_box = HyperBox(np.array(u_lo), np.array(u_hi))
    fixed = None
    if args.fixed:
        vals = [float(v) for v in args.fixed.split(",")]
        half = len(vals) // 2
        fixed = HyperBox(np.array(vals[:half]), np.array(vals[half:]))
    try:
        res = safe_box(sys, Sx, spec, mode=args.mode, input_box=input_box,
                       fixed_box=fixed, tols=tols)
    except BoxInfeasible as exc:
        print(f"box program infeasible: {exc}", file=_sys.stderr)
        return EXIT_EMPTY
    path = args.json_out or "box.json"
    save_json({**hyperbox_to_dict(res.box), "v": res.v.tolist(),
               "degenerate": res.degenerate}, path)
    print(f"{path}: widths={np.round(res.box.widths, 6).tolist()} "
          f"degenerate={res.degenerate}")
    return EXIT_OK


def _schedule_from_options(problem: Problem):
    sched = []
    for entry in problem.options.get("safe_schedule", []):
        poly = HPolytope.from_dict(entry["Sxu"])
        sched.append((int(entry["t"]),
                      SafeSet(poly, problem.safe.n, problem.safe.m)))
    sched.sort(key=lambda kv: kv[0])
    return sched


def cmd_filter(args) -> int:
    tols = _tols(args)
    problem = load_problem(args.file)
    sys, safe, K = _prepare(problem, tols)
    d = load_json(args.rcis)
    ir = implicit_rcis_from_dict(d, sys, safe)
    fs = FilterState(system=sys, spec=ir.spec, variant=args.variant)
    schedule = _schedule_from_options(problem)
    n, m = sys.n, sys.m
    counts = {PASS: 0, CORRECTED: 0}
    corrections = []
    stream = _sys.stdin if args.stream else open(args.trace)
    try:
        for line in stream:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split()]
            if len(vals) != 1 + n + m:
                print(f"bad line (need t + {n} states + {m} inputs): {line}",
                      file=_sys.stderr)
                return EXIT_USAGE
            t = int(vals[0])
            x = np.array(vals[1:1 + n])
            u_nom = np.array(vals[1 + n:])
            safe_t = safe
            for st, s in schedule:
                if st <= t:
                    safe_t = s
            if K is not None:
                # the filter works in pre-feedback coordinates
                u_nom = u_nom - K @ x
            out = filter_step(fs, t, safe_t, x, u_nom, tols)
            u_plant = out.u if K is None else (K @ x + out.u)
            fields = [f"{v:.12g}" for v in np.atleast_1d(u_plant)]
            print(" ".join(fields) + f" {out.status} {out.t_star}")
            counts[out.status] = counts.get(out.status, 0) + 1
            if out.status == CORRECTED:
                corrections.append(float(np.linalg.norm(u_plant - u_nom)))
    except InitiallyInfeasible as exc:
        print(f"initially infeasible: {exc}", file=_sys.stderr)
        return EXIT_INFEASIBLE_START
    except SafeSetShrank as exc:
        print(f"safe set shrank: {exc}", file=_sys.stderr)
        return EXIT_SHRANK
    finally:
        if stream is not _sys.stdin:
            stream.close()
    total = sum(counts.values())
    mean_corr = float(np.mean(corrections)) if corrections else 0.0
    print(f"# steps={total} pass={counts.get(PASS, 0)} "
          f"corrected={counts.get(CORRECTED, 0)} mean_correction={mean_corr:.6g}",
          file=_sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = SUITES[args.suite]
    kwargs = {"seed": args.seed}
    if args.samples is not None and args.suite in ("hierarchy", "volume", "sweep"):
        kwargs["samples"] = args.samples
    if args.suite == "hierarchy" and args.qmax:
        kwargs["qmax"] = args.qmax
    if args.suite in ("scal", "volume") and args.n_list:
        kwargs["n_list"] = tuple(int(v) for v in args.n_list.split(","))
    if args.suite == "volume" and args.instances:
        kwargs["instances"] = args.instances
    if args.suite == "converge" and args.taus:
        kwargs["taus"] = tuple(int(v) for v in args.taus.split(","))
    report = suite(**kwargs)
    text = report.render()
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.json_out}")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ciskit",
        description="implicit controlled invariant sets: synthesis, "
                    "filtering, boxes, benchmarks")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-feas", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=None)
    common.add_argument("--json-out", type=str, default=None)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="closed-form implicit invariant set")
    p.add_argument("file")
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--explicit", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("project", parents=[common],
                       help="explicit set from a stored implicit one")
    p.add_argument("rcis")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("maximal", parents=[common],
                       help="iterative maximal invariant set")
    p.add_argument("file")
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_maximal)

    p = sub.add_parser("check", parents=[common],
                       help="sampled invariance or weak-completeness check")
    p.add_argument("file")
    p.add_argument("--set", type=str, default=None)
    p.add_argument("--weak", action="store_true")
    p.set_defaults(func=cmd_check, samples=200)

    p = sub.add_parser("box", parents=[common], help="largest safe hyper-box")
    p.add_argument("file")
    p.add_argument("--mode", choices=["geometric-mean", "sum-width",
                                      "feasibility"],
                   default="geometric-mean")
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=int, default=None)
    p.add_argument("--fixed", type=str, default=None,
                   help="lo1,..,lon,hi1,..,hin for feasibility mode")
    p.set_defaults(func=cmd_box)

    p = sub.add_parser("filter", parents=[common],
                       help="runtime supervision over a state/input stream")
    p.add_argument("file")
    p.add_argument("--rcis", required=True)
    p.add_argument("--stream", action="store_true",
                   help="read lines 't x... u...' from stdin")
    p.add_argument("--trace", type=str, default=None,
                   help="read the lines from a file instead")
    p.add_argument("--variant", choices=["U1", "U2", "U3"], default="U3")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("bench", parents=[common], help="experiment suites")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--qmax", type=int, default=None)
    p.add_argument("--n-list", type=str, default=None)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--taus", type=str, default=None)
    p.set_defaults(func=cmd_bench)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "filter" and not args.stream and not args.trace:
        parser.error("filter needs --stream or --trace")
    if args.command == "check" and not args.weak and not args.set:
        parser.error("check needs --set or --weak")
    try:
        return args.func(args)
    except ProblemFormatError as exc:
        print(f"problem file error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
