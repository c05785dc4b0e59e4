"""Command line interface: ``cvrplab <subcommand> ...``.

Exit status is 0 on success, 2 when some runs failed, 1 on a bad request.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from . import bench
from .augment import KINDS, augment_solve, make_transforms
from .construct import METHODS, ConstructConfig, construct
from .core import Instance, check_feasible
from .decode import STRATEGIES, DecodeConfig, rollout
from .improve import OPERATORS, SearchConfig, local_search
from .instances import GenConfig, InstanceParseError, generate, generate_many, read_instance, write_instance
from .oracle import OracleLimitError, brute_force_optimum
from .rrc import ACCEPT_MODES, RrcConfig, rrc_run, write_trace

EXIT_OK, EXIT_SPEC, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("cvrplab")


class SpecExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which means "partial failure" here
        self.print_usage(sys.stderr)
        self.exit(EXIT_SPEC, f"{self.prog}: error: {message}\n")


# -- helpers ----------------------------------------------------------------------------

def _instances(args) -> List[Instance]:
    if args.instances:
        out = []
        for p in args.instances:
            if os.path.isdir(p):
                out.extend(read_instance(os.path.join(p, f)) for f in sorted(os.listdir(p)))
            else:
                out.append(read_instance(p))
        return out
    if args.n is None:
        raise SpecExit("give instance files or --n to generate")
    return generate_many(args.n, args.count, args.seed, args.capacity)


def _emit(rows, args, fields=None) -> None:
    text = bench.rows_to_text(rows, args.format, fields)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _row(inst, method, sol=None, error=None, **extra):
    row = {"instance": inst.name, "method": method, "status": "ok" if error is None else "error",
           "cost": None, "routes": "", "error": error or ""}
    if sol is not None:
        row["cost"] = sol.cost
        row["routes"] = json.dumps([list(r) for r in sol.routes])
        verdict = check_feasible(inst, sol)
        if not verdict.ok:
            row["status"], row["error"] = "error", "; ".join(verdict.violations)
    row.update(extra)
    return row


def _status(rows) -> int:
    return EXIT_PARTIAL if any(r["status"] != "ok" for r in rows) else EXIT_OK


def _guard(fn, inst, method, **extra):
    try:
        return _row(inst, method, fn(), **extra)
    except Exception as exc:  # noqa: BLE001 - one instance failing is a partial failure
        return _row(inst, method, error=f"{type(exc).__name__}: {exc}", **extra)


ROW_FIELDS = ("instance", "method", "status", "cost", "routes", "error")


# -- subcommands ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    seeds = [args.seed + i for i in range(args.count)]
    rows = []
    for i, s in enumerate(seeds):
        cfg = GenConfig(args.n, args.capacity, args.demand_low, args.demand_high, s)
        inst = generate(cfg, name=f"gen_n{args.n}_s{args.seed}_{i:04d}")
        ext = "vrp" if args.vrplib else "txt"
        path = os.path.join(out, f"{inst.name}.{ext}")
        write_instance(inst, path, "vrplib" if args.vrplib else "native")
        rows.append({"instance": inst.name, "path": path, "n": inst.n, "capacity": inst.capacity})
    sys.stdout.write(bench.rows_to_text(rows, args.format))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = ConstructConfig(args.method)
    ops = tuple(args.operators.split(",")) if args.operators else OPERATORS
    search = SearchConfig(args.search, ops) if args.ls else None
    label = args.method + ("+ls" if args.ls else "")

    def run(inst):
        sol = construct(inst, cfg)
        return local_search(inst, sol, search) if search else sol

    rows = [_guard(lambda: run(inst), inst, label) for inst in _instances(args)]
    _emit(rows, args, ROW_FIELDS)
    return _status(rows)


def cmd_decode(args) -> int:
    policy = bench.load_policy(args.policy)
    cfg = DecodeConfig(args.strategy, args.pomo, args.beam, args.epsilon, args.temperature, args.seed)
    augset = make_transforms(args.aug)
    label = f"{args.strategy}/beam={args.beam}/aug={args.aug}"

    def run(inst):
        res = augment_solve(policy, inst, augset, cfg)
        if res.best is None:
            raise RuntimeError("; ".join(e for e in res.errors if e))
        return res.best

    rows = [_guard(lambda: run(inst), inst, label) for inst in _instances(args)]
    _emit(rows, args, ROW_FIELDS)
    return _status(rows)


def cmd_rrc(args) -> int:
    policy = bench.load_policy(args.policy)
    cfg = RrcConfig(args.iterations, args.seg_min, args.seg_max, args.accept, args.T0, args.cooling,
                    seed=args.seed)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)

    def run(inst):
        init = rollout(policy, inst, "argmax").solution(inst)
        res = rrc_run(policy, inst, init, cfg)
        if args.trace_dir:
            write_trace(res.trace, os.path.join(args.trace_dir, f"{inst.name}.csv"))
        return res.solution

    rows = [_guard(lambda: run(inst), inst, f"rrc/{args.accept}/{args.iterations}")
            for inst in _instances(args)]
    _emit(rows, args, ROW_FIELDS)
    return _status(rows)


def cmd_train_toy(args) -> int:
    from .neural import PolicyParams, save_params, train_reinforce, train_supervised
    from .oracle import brute_force_optimum as optimum

    params = PolicyParams.init(args.embed_dim, args.heads, args.layers, seed=args.seed)
    data = generate_many(args.n, args.count, args.seed)
    if args.mode == "supervised":
        if args.n > 8:
            raise SpecExit("supervised toy training labels with the exact oracle; use --n <= 8")
        pairs = [(inst, optimum(inst).solution) for inst in data]
        params, hist = train_supervised(params, pairs, args.epochs, args.lr, log=log.info)
    else:
        params, hist = train_reinforce(params, data, args.epochs, args.lr, args.pomo, args.seed, log=log.info)
    ckpt = args.checkpoint or "policy.npz"
    save_params(params, ckpt)
    rows = [{"epoch": i, "value": v} for i, v in enumerate(hist)]
    _emit(rows, args, ("epoch", "value"))
    log.info("checkpoint written to %s", ckpt)
    return EXIT_OK


def cmd_oracle(args) -> int:
    def run(inst):
        return brute_force_optimum(inst, args.n_limit).solution

    rows = [_guard(lambda: run(inst), inst, "oracle") for inst in _instances(args)]
    _emit(rows, args, ROW_FIELDS)
    return _status(rows)


def cmd_bench(args) -> int:
    if args.config:
        spec = bench.ExperimentSpec.from_json(args.config)
        if args.out:
            spec.out_dir = args.out
    else:
        if not args.methods:
            raise SpecExit("give --config or at least one --method")
        spec = bench.ExperimentSpec(
            methods=args.methods, n=None if args.instance_dir else (args.n or 20), count=args.count,
            capacity=args.capacity, instance_dir=args.instance_dir, reference=args.reference,
            repetitions=args.repetitions, seed=args.seed, policy=args.policy,
            out_dir=args.out or "bench_out", fmt=args.format, workers=args.workers)
    table = bench.run_experiment(spec)
    for method, s in table.summary.items():
        gap = "" if s["mean_gap"] is None else f" gap={s['mean_gap']:.3f}%"
        cost = "n/a" if s["mean_cost"] is None else f"{s['mean_cost']:.4f}"
        print(f"{method}: cost={cost}{gap} errors={s['errors']}/{s['runs']}", file=sys.stderr)
    return EXIT_PARTIAL if table.n_errors else EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _common(p, out_help="output file (default stdout)"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help=out_help)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def _source(p):
    p.add_argument("instances", nargs="*", help="instance files or directories")
    p.add_argument("--n", type=int, default=None, help="generate this many customers instead")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--capacity", type=float, default=None)


def _policy(p):
    p.add_argument("--policy", default="distance",
                   help="'distance', 'distance:<scale>' or a checkpoint .npz")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cvrplab", description="CVRP heuristics, neural decoding and benchmarking.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write random instances")
    _common(p, "output directory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--capacity", type=float, default=None)
    p.add_argument("--demand-low", type=int, default=1)
    p.add_argument("--demand-high", type=int, default=9)
    p.add_argument("--vrplib", action="store_true", help="write VRPLIB files")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("solve", help="constructive heuristic, optionally followed by local search")
    _common(p)
    _source(p)
    p.add_argument("--method", choices=METHODS, default="savings_parallel")
    p.add_argument("--ls", action="store_true", help="run local search afterwards")
    p.add_argument("--search", choices=("first_improvement", "best_improvement"), default="first_improvement")
    p.add_argument("--operators", default=None, help="comma separated subset of " + ",".join(OPERATORS))
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("decode", help="policy decoding with POMO starts, beam and augmentation")
    _common(p)
    _source(p)
    _policy(p)
    p.add_argument("--strategy", choices=STRATEGIES, default="argmax")
    p.add_argument("--pomo", type=int, default=None, help="number of start nodes (default all)")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--aug", choices=KINDS, default="none")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("rrc", help="random re-construct improvement")
    _common(p)
    _source(p)
    _policy(p)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--accept", choices=ACCEPT_MODES, default="simulated_annealing")
    p.add_argument("--T0", type=float, default=None)
    p.add_argument("--cooling", type=float, default=0.99)
    p.add_argument("--seg-min", type=int, default=4)
    p.add_argument("--seg-max", type=int, default=None)
    p.add_argument("--trace-dir", default=None, help="write one trace CSV per instance here")
    p.set_defaults(fn=cmd_rrc)

    p = sub.add_parser("train-toy", help="train a small attention policy")
    _common(p, "loss/cost history file (default stdout)")
    p.add_argument("--mode", choices=("supervised", "reinforce"), default="supervised")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--pomo", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--checkpoint", default=None, help="where to save weights (default policy.npz)")
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("oracle", help="exact optimum by enumeration (small n)")
    _common(p)
    _source(p)
    p.add_argument("--n-limit", type=int, default=9)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("bench", help="run a method matrix and write result tables")
    _common(p, "output directory (default bench_out)")
    p.add_argument("--config", default=None, help="JSON file with ExperimentSpec fields")
    p.add_argument("--method", dest="methods", action="append", default=[],
                   help="method id such as decode:strategy=beam,beam=4; repeatable")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--capacity", type=float, default=None)
    p.add_argument("--instance-dir", default=None)
    p.add_argument("--reference", default=None, help="'oracle' or a name,cost CSV")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    _policy(p)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (SpecExit, bench.SpecError, InstanceParseError, OracleLimitError, ValueError,
            FileNotFoundError) as exc:
        print(f"cvrplab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
