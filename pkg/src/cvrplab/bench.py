"""Experiment harness: method matrix x instances, gaps, result tables, plot series.

A method is written as ``family:key=value,...``, for example::

    construct:method=savings_parallel,ls=1
    decode:strategy=beam,beam=4,aug=fold8_flip
    rrc:iters=100,accept=simulated_annealing

Every random choice derives from one root seed through
``SeedSequence([root, repetition, instance_index, method_index])``.
Result tables are sorted before writing so they are byte-reproducible;
wall times go to a separate file for the same reason.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .augment import augment_solve, make_transforms
from .construct import ConstructConfig, construct
from .core import Instance, Solution, check_feasible, evaluate_cost, optimality_gap
from .decode import DecodeConfig, DistanceHeuristicPolicy, rollout
from .improve import OPERATORS, SearchConfig, local_search
from .instances import generate_many, load_references, read_instance
from .oracle import brute_force_optimum
from .rrc import RrcConfig, rrc_run

log = logging.getLogger(__name__)

FAMILIES = ("construct", "decode", "rrc")
RESULT_FIELDS = ("instance", "method", "rep", "seed", "status", "cost", "gap", "min_load_ratio", "error")
ORACLE_LIMIT = 9


class SpecError(ValueError):
    """The experiment description itself is invalid."""


# -- method ids ----------------------------------------------------------------------

def parse_method(method_id: str) -> Dict[str, str]:
    family, _, rest = method_id.partition(":")
    if family not in FAMILIES:
        raise SpecError(f"method {method_id!r}: family must be one of {FAMILIES}")
    fields = {"family": family}
    for part in filter(None, rest.split(",")):
        key, eq, value = part.partition("=")
        if not eq:
            raise SpecError(f"method {method_id!r}: expected key=value, got {part!r}")
        fields[key.strip()] = value.strip()
    return fields


def _decode_config(f, seed) -> DecodeConfig:
    pomo = f.get("pomo")
    return DecodeConfig(
        strategy=f.get("strategy", "argmax"),
        pomo_size=int(pomo) if pomo else None,
        beam_size=int(f.get("beam", 1)),
        epsilon=float(f.get("eps", 0.1)),
        temperature=float(f.get("temp", 1.0)),
        seed=seed,
    )


def _rrc_config(f, seed) -> RrcConfig:
    return RrcConfig(
        iterations=int(f.get("iters", 50)),
        accept=f.get("accept", "simulated_annealing"),
        T0=float(f["T0"]) if "T0" in f else None,
        cooling=float(f.get("cooling", 0.99)),
        seg_min=int(f.get("seg_min", 4)),
        seg_max=int(f["seg_max"]) if "seg_max" in f else None,
        seed=seed,
    )


def validate_method(method_id: str) -> None:
    f = parse_method(method_id)
    try:
        if f["family"] == "construct":
            ConstructConfig(f.get("method", "savings_parallel"))
        elif f["family"] == "decode":
            _decode_config(f, 0)
            make_transforms(f.get("aug", "none"))
        else:
            _rrc_config(f, 0)
    except ValueError as exc:
        raise SpecError(f"method {method_id!r}: {exc}") from None


def load_policy(spec: str):
    """``distance``, ``distance:<scale>`` or a checkpoint path."""
    if spec == "distance" or spec.startswith("distance:"):
        _, _, scale = spec.partition(":")
        return DistanceHeuristicPolicy(float(scale) if scale else 0.1)
    from .neural import NeuralPolicy, load_params
    return NeuralPolicy(load_params(spec))


def solve_with(method_id: str, instance: Instance, policy, seed: int) -> Solution:
    f = parse_method(method_id)
    if f["family"] == "construct":
        sol = construct(instance, ConstructConfig(f.get("method", "savings_parallel")))
        if f.get("ls", "0") not in ("0", "", "false"):
            ops = tuple(f["ops"].split("+")) if "ops" in f else OPERATORS
            sol = local_search(instance, sol, SearchConfig(f.get("search", "first_improvement"), ops))
        return sol
    if f["family"] == "decode":
        res = augment_solve(policy, instance, make_transforms(f.get("aug", "none")),
                            _decode_config(f, seed))
        if res.best is None:
            raise RuntimeError("; ".join(e for e in res.errors if e))
        return res.best
    init = rollout(policy, instance, "argmax").solution(instance)
    return rrc_run(policy, instance, init, _rrc_config(f, seed)).solution


# -- experiments ---------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    methods: Sequence[str]
    n: Optional[int] = None  # generated instances ...
    count: int = 10
    capacity: Optional[float] = None
    instance_dir: Optional[str] = None  # ... or files from a directory
    reference: Optional[str] = None  # "oracle", a name,cost CSV, or None
    repetitions: int = 1
    seed: int = 0
    policy: str = "distance"
    out_dir: Optional[str] = None
    fmt: str = "csv"
    workers: int = 1

    def validate(self) -> None:
        if not self.methods:
            raise SpecError("at least one method is required")
        for m in self.methods:
            validate_method(m)
        if (self.n is None) == (self.instance_dir is None):
            raise SpecError("give exactly one of n (generated) or instance_dir")
        if self.fmt not in ("csv", "jsonl"):
            raise SpecError(f"unknown format {self.fmt!r}")
        if self.repetitions < 1:
            raise SpecError("repetitions must be >= 1")
        if not self.policy.startswith("distance") and not os.path.isfile(self.policy):
            raise SpecError(f"policy checkpoint {self.policy!r} not found")

    def load_instances(self) -> List[Instance]:
        if self.instance_dir is not None:
            names = sorted(os.listdir(self.instance_dir))
            return [read_instance(os.path.join(self.instance_dir, f)) for f in names
                    if os.path.isfile(os.path.join(self.instance_dir, f))]
        return generate_many(self.n, self.count, self.seed, self.capacity)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as f:
            raw = json.load(f)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise SpecError(str(exc)) from None


@dataclass
class ResultTable:
    rows: List[dict]
    summary: Dict[str, dict]
    solutions: List[dict] = field(default_factory=list)
    timings: List[dict] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return sum(r["status"] != "ok" for r in self.rows)


def cell_seed(root: int, rep: int, inst_idx: int, method_idx: int) -> int:
    return int(np.random.SeedSequence([root, rep, inst_idx, method_idx]).generate_state(1)[0])


def load_ratios(instance: Instance, sol: Solution) -> List[float]:
    q = instance.node_demands
    return [float(sum(q[c] for c in r) / instance.capacity) for r in sol.routes]


def _run_cell(job):
    instance, method, rep, seed, policy_spec = job
    t0 = time.perf_counter()
    row = {"instance": instance.name, "method": method, "rep": rep, "seed": seed,
           "status": "ok", "cost": None, "gap": None, "min_load_ratio": None, "error": ""}
    sol = None
    try:
        needs_policy = parse_method(method)["family"] != "construct"
        policy = load_policy(policy_spec) if needs_policy else None
        sol = solve_with(method, instance, policy, seed)
        verdict = check_feasible(instance, sol)
        if not verdict.ok:
            raise RuntimeError("infeasible result: " + "; ".join(verdict.violations))
        row["cost"] = evaluate_cost(instance, sol)
        row["min_load_ratio"] = min(load_ratios(instance, sol))
    except Exception as exc:  # noqa: BLE001 - failures become rows, the matrix continues
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
        sol = None
    return row, sol, time.perf_counter() - t0


def _references(spec: ExperimentSpec, instances: List[Instance]) -> Dict[str, float]:
    if spec.reference is None:
        return {}
    if spec.reference == "oracle":
        big = [i.name for i in instances if i.n > ORACLE_LIMIT]
        if big:
            raise SpecError(f"oracle reference needs n <= {ORACLE_LIMIT}; too large: {big[:3]}")
        return {i.name: brute_force_optimum(i).cost for i in instances}
    return load_references(spec.reference)


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    spec.validate()
    instances = spec.load_instances()
    refs = _references(spec, instances)
    jobs = [(inst, m, rep, cell_seed(spec.seed, rep, i, k), spec.policy)
            for rep in range(spec.repetitions)
            for i, inst in enumerate(instances)
            for k, m in enumerate(spec.methods)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_run_cell, jobs, chunksize=4))
    else:
        results = [_run_cell(j) for j in jobs]

    rows, solutions, timings = [], [], []
    for (row, sol, dt), (inst, *_rest) in zip(results, jobs):
        if row["cost"] is not None and inst.name in refs:
            row["gap"] = optimality_gap(row["cost"], refs[inst.name]).gap
        row["wall_time"] = dt  # kept in memory only; results files stay byte-stable
        rows.append(row)
        timings.append({"instance": row["instance"], "method": row["method"], "rep": row["rep"],
                        "seconds": dt})
        if sol is not None:
            solutions.append({"instance": row["instance"], "method": row["method"], "rep": row["rep"],
                              "routes": [list(r) for r in sol.routes], "cost": row["cost"],
                              "load_ratios": load_ratios(inst, sol)})
    key = lambda r: (r["method"], r["instance"], r["rep"])  # noqa: E731
    rows.sort(key=key)
    solutions.sort(key=key)
    timings.sort(key=key)
    table = ResultTable(rows, summarize(rows), solutions, timings)
    if spec.out_dir:
        write_outputs(table, spec.out_dir, spec.fmt)
    return table


def summarize(rows: Sequence[dict]) -> Dict[str, dict]:
    out: Dict[str, dict] = {}
    for m in sorted({r["method"] for r in rows}):
        mine = [r for r in rows if r["method"] == m]
        costs = [r["cost"] for r in mine if r["status"] == "ok"]
        gaps = [r["gap"] for r in mine if r["gap"] is not None]
        out[m] = {
            "runs": len(mine),
            "errors": len(mine) - len(costs),
            "mean_cost": float(np.mean(costs)) if costs else None,
            "stderr_cost": _stderr(costs),
            "mean_gap": float(np.mean(gaps)) if gaps else None,
        }
    return out


def _stderr(xs) -> Optional[float]:
    if len(xs) < 2:
        return 0.0 if xs else None
    return float(np.std(xs, ddof=1) / math.sqrt(len(xs)))


# -- output ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def rows_to_text(rows: Sequence[dict], fmt: str = "csv", fields: Sequence[str] = None) -> str:
    fields = list(fields or (rows[0].keys() if rows else RESULT_FIELDS))
    if fmt == "jsonl":
        return "".join(json.dumps({k: r.get(k) for k in fields}, sort_keys=True) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in fields])
    return buf.getvalue()


def write_outputs(table: ResultTable, out_dir, fmt: str = "csv") -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"results.{fmt}"), "w", newline="") as f:
        f.write(rows_to_text(table.rows, fmt, RESULT_FIELDS))
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(table.summary, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "solutions.jsonl"), "w") as f:
        for s in table.solutions:
            f.write(json.dumps(s, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "timings.csv"), "w", newline="") as f:
        f.write(rows_to_text(table.timings, "csv", ("instance", "method", "rep", "seconds")))
    emit_plot_data(table.rows, "family", os.path.join(out_dir, "plots"))


def emit_plot_data(rows: Sequence[dict], group_by: str = "family", out_dir=".",
                   x: str = "method") -> List[str]:
    """One ``series_<group>.csv`` per group with columns x, mean, stderr, count.

    ``group_by`` and ``x`` name either a result column or a method field
    (``family``, ``strategy``, ``iters``, ``aug``, ...). Groups without a
    successful run are skipped with a warning.
    """
    if not rows:
        raise ValueError("no rows to plot")

    def field_of(r, name):
        if name in r:
            return r[name]
        return parse_method(r["method"]).get(name, "")

    groups: Dict[str, Dict[str, list]] = {}
    for r in rows:
        g = str(field_of(r, group_by))
        xs = groups.setdefault(g, {})
        vals = xs.setdefault(str(field_of(r, x)), [])
        if r.get("status", "ok") == "ok" and r.get("cost") is not None:
            vals.append(r["cost"])
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for g in sorted(groups):
        series = [(xv, v) for xv, v in groups[g].items() if v]
        if not series:
            log.warning("plot group %r has no successful runs; skipped", g)
            continue
        series.sort(key=lambda t: _sort_key(t[0]))
        path = os.path.join(out_dir, f"series_{_slug(g or 'all')}.csv")
        rows_out = [{"x": xv, "mean": float(np.mean(v)), "stderr": _stderr(v), "count": len(v)}
                    for xv, v in series]
        with open(path, "w", newline="") as f:
            f.write(rows_to_text(rows_out, "csv", ("x", "mean", "stderr", "count")))
        written.append(path)
    return written


def _sort_key(v: str):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in s)
