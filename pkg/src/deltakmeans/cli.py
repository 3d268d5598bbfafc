"""Command-line front end: cluster, bench, verify.

Exit status is 0 on success, 1 on bad input (including flag errors and
instances too large for the exact solver) and 2 when an internal invariant
fails.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ptas
from .baselines import SEED_MODES, LloydConfig, lloyd
from .core import InvariantViolation
from .data import GeneratorSpec, InputError, generate, load_csv
from .oracle import LimitExceeded, OracleLimit, exact_kmeans
from .report import REPORT_VERSION, build_report, check_report, dumps_csv, dumps_json, result_entry

ALGORITHMS = ("ptas", "lloyd", "exact")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.5, help="approximation parameter for ptas")
    p.add_argument("--repetitions", type=int, default=None,
                   help="ptas repetitions (default 10*ceil(log2(n)^k), capped)")
    p.add_argument("--seed", type=int, default=0, help="master seed for every randomized algorithm")
    p.add_argument("--workers", type=int, default=1, help="threads for ptas repetitions")
    p.add_argument("--lloyd-init", choices=SEED_MODES, default="random-points")
    p.add_argument("--lloyd-iters", type=int, default=100)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deltakmeans", description="k-means for points with missing coordinates")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cluster", help="cluster one instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file; '?' or an empty field marks a missing entry")
    src.add_argument("--generate", metavar="SPEC", help="generator spec, e.g. k=2,n=6,d=2,sigma=0.01,miss=0.2,delta=1,seed=7")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS + ("all",), default="all")
    _add_run_flags(p)

    p = sub.add_parser("bench", help="sweep generator specs and algorithms")
    p.add_argument("--spec", action="append", required=True, help="generator spec (repeatable)")
    p.add_argument("--seeds", type=int, default=3, help="instances per spec; generator seeds spec.seed .. spec.seed+N-1")
    p.add_argument("--k", type=int, default=None, help="clusters to fit (default: the planted k)")
    p.add_argument("--algorithms", default="ptas,lloyd,exact", help="comma-separated subset of ptas,lloyd,exact")
    p.add_argument("--cell-workers", type=int, default=1, help="cells run concurrently on this many threads")
    _add_run_flags(p)

    p = sub.add_parser("verify", help="re-check a report, or run the invariant suite on an instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--report", help="JSON report produced by cluster or bench")
    src.add_argument("--input", help="CSV instance")
    src.add_argument("--generate", metavar="SPEC")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--repetitions", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_instance(args):
    if getattr(args, "input", None):
        return load_csv(args.input), f"file:{args.input}"
    spec = GeneratorSpec.parse(args.generate)
    return generate(spec)[0], f"generate:{spec.describe()}"


def _run_config(args, k) -> dict:
    return {
        "k": k,
        "epsilon": args.epsilon,
        "repetitions": args.repetitions,
        "seed": args.seed,
        "lloyd_init": args.lloyd_init,
        "lloyd_iters": args.lloyd_iters,
    }


def _solve(instance, k, algorithm, args):
    t0 = time.perf_counter()
    if algorithm == "ptas":
        cfg = ptas.PtasConfig(epsilon=args.epsilon, repetitions=args.repetitions, master_seed=args.seed,
                              workers=args.workers)
        sol = ptas.run(instance, k, cfg)
    elif algorithm == "lloyd":
        sol = lloyd(instance, k, LloydConfig(max_iters=args.lloyd_iters, init=args.lloyd_init, seed=args.seed))
    else:
        sol = exact_kmeans(instance, k)
    return sol, (time.perf_counter() - t0) * 1000.0


def _cell(instance, source, k, algorithms, args) -> dict:
    if not 1 <= k <= instance.n:
        raise InputError(f"k={k} must lie in [1, {instance.n}]")
    results = [result_entry(*_solve(instance, k, a, args)) for a in algorithms]
    return build_report(instance, source, _run_config(args, k), results)


def _select(algorithm: str, n: int) -> list[str]:
    if algorithm != "all":
        return [algorithm]
    limit = OracleLimit()
    return [a for a in ALGORITHMS if a != "exact" or n <= limit.max_points]


def _emit(report: dict, args) -> None:
    text = dumps_json(report) if args.format == "json" else dumps_csv(report)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_cluster(args) -> int:
    instance, source = _load_instance(args)
    algorithms = _select(args.algorithm, instance.n)
    report = _cell(instance, source, args.k, algorithms, args)
    if args.algorithm == "all" and "exact" not in algorithms:
        report["config"]["exact_skipped"] = f"n={instance.n} exceeds the exact solver limit"
    _emit(report, args)
    return 0


def cmd_bench(args) -> int:
    specs = [GeneratorSpec.parse(s) for s in args.spec]
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    unknown = sorted(set(algorithms) - set(ALGORITHMS))
    if unknown or not algorithms:
        raise InputError(f"unknown algorithms: {', '.join(unknown) or '(none)'}")
    if args.seeds < 1 or args.cell_workers < 1:
        raise InputError("--seeds and --cell-workers must be >= 1")
    jobs = [spec.with_seed(spec.seed + j) for spec in specs for j in range(args.seeds)]

    def one(spec):
        instance, _ = generate(spec)
        return _cell(instance, f"generate:{spec.describe()}", args.k or spec.k_true, algorithms, args)

    with ThreadPoolExecutor(args.cell_workers) as pool:
        cells = list(pool.map(one, jobs))
    _emit({"version": REPORT_VERSION, "cells": cells}, args)
    return 0


def _invariant_suite(instance, args) -> list[str]:
    lines = []
    k = args.k
    if not 1 <= k <= instance.n:
        raise InputError(f"k={k} must lie in [1, {instance.n}]")
    cfg = ptas.PtasConfig(epsilon=args.epsilon, repetitions=args.repetitions, master_seed=args.seed, validate=True)
    consts = ptas._constants(cfg, k, instance.delta)
    limit = k * (instance.delta + 1)
    done = 0
    for rep in range(args.repetitions):
        trace = []
        sol = ptas.run_once(instance, k, cfg, rep, consts, trace)
        prev = 0
        for rec in trace:
            if rec.total_steps <= prev:
                raise InvariantViolation(f"repetition {rep}: step did not raise the step count")
            prev = rec.total_steps
        if len(trace) > limit:
            raise InvariantViolation(f"repetition {rep}: {len(trace)} steps exceed {limit}")
        done += sol is not None
    lines.append(f"ok ptas: {args.repetitions} repetitions validated, {done} completed, step bound {limit}")

    sol = lloyd(instance, k, LloydConfig(seed=args.seed))
    hist = sol.meta["history"]
    if any(b > a for a, b in zip(hist, hist[1:])):
        raise InvariantViolation("lloyd cost increased between iterations")
    lines.append(f"ok lloyd: {len(hist)} iterations, cost non-increasing")

    best = ptas.run(instance, k, ptas.PtasConfig(epsilon=args.epsilon, repetitions=args.repetitions,
                                                 master_seed=args.seed))
    if instance.n <= OracleLimit().max_points:
        opt = exact_kmeans(instance, k).cost
        for name, cost in (("ptas", best.cost), ("lloyd", sol.cost)):
            if cost < opt * (1 - 1e-9) - 1e-12:
                raise InvariantViolation(f"{name} cost {cost!r} below the exact optimum {opt!r}")
        lines.append(f"ok exact lower bound: opt={opt!r} ptas={best.cost!r} lloyd={sol.cost!r}")
    else:
        lines.append(f"skip exact lower bound: n={instance.n} exceeds the exact solver limit")
    return lines


def cmd_verify(args) -> int:
    if args.report:
        try:
            report = json.loads(Path(args.report).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read report {args.report}: {exc}") from exc
        try:
            lines = check_report(report)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed report: {exc}") from exc
    else:
        instance, _ = _load_instance(args)
        lines = _invariant_suite(instance, args)
    print("\n".join(lines))
    return 0


COMMANDS = {"cluster": cmd_cluster, "bench": cmd_bench, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (InputError, LimitExceeded, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
