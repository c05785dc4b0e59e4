"""Random instance generation, instance files and reference-cost ingestion.

Two file formats are understood:

* native: first line ``CVRPLAB 1``, then ``NAME <text>`` and ``CAPACITY <q>``,
  then one ``idx x y demand`` line per node with the depot as index 0.
  Floats are written with ``repr`` so a read after a write is bit-exact.
* a VRPLIB subset (NAME, DIMENSION, CAPACITY, EDGE_WEIGHT_TYPE EUC_2D,
  NODE_COORD_SECTION, DEMAND_SECTION, DEPOT_SECTION, EOF).
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .core import Instance

log = logging.getLogger(__name__)

NATIVE_HEADER = "CVRPLAB 1"

# Community convention for uniform CVRP benchmarks; overridable per GenConfig.
DEFAULT_CAPACITY = {10: 20, 20: 30, 50: 40, 100: 50, 200: 80, 500: 100, 1000: 250}


def default_capacity(n: int) -> int:
    for size in sorted(DEFAULT_CAPACITY):
        if n <= size:
            return DEFAULT_CAPACITY[size]
    return DEFAULT_CAPACITY[max(DEFAULT_CAPACITY)]


class InstanceParseError(ValueError):
    def __init__(self, msg: str, path=None, line: Optional[int] = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


@dataclass(frozen=True)
class GenConfig:
    n: int = 100
    capacity: Optional[float] = None
    demand_low: int = 1
    demand_high: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        q = self.resolved_capacity
        if not 1 <= self.demand_low <= self.demand_high <= q:
            raise ValueError(f"need 1 <= demand_low <= demand_high <= capacity, got "
                             f"{self.demand_low}, {self.demand_high}, {q}")

    @property
    def resolved_capacity(self) -> float:
        return float(self.capacity) if self.capacity is not None else float(default_capacity(self.n))


def generate(config: GenConfig, name: Optional[str] = None) -> Instance:
    """Uniform unit-square coordinates and uniform integer demands."""
    rng = np.random.default_rng(config.seed)
    depot = rng.random(2)
    customers = rng.random((config.n, 2))
    demands = rng.integers(config.demand_low, config.demand_high + 1, size=config.n)
    return Instance(
        depot=tuple(depot),
        customers=customers,
        demands=demands.astype(np.float64),
        capacity=config.resolved_capacity,
        name=name or f"gen-n{config.n}-s{config.seed}",
    )


def generate_many(n: int, count: int, seed: int, capacity: Optional[float] = None):
    """``count`` instances with seeds derived from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [
        generate(GenConfig(n=n, capacity=capacity, seed=int(s)), name=f"n{n}-{seed}-{k:04d}")
        for k, s in enumerate(seeds)
    ]


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)


def write_instance(instance: Instance, path, fmt: str = "native") -> None:
    if fmt == "native":
        lines = [NATIVE_HEADER, f"NAME {instance.name}", f"CAPACITY {_num(instance.capacity)}"]
        for i, ((x, y), d) in enumerate(zip(instance.coords, instance.node_demands)):
            lines.append(f"{i} {float(x)!r} {float(y)!r} {_num(d)}")
    elif fmt == "vrplib":
        lines = [
            f"NAME : {instance.name}",
            "TYPE : CVRP",
            f"DIMENSION : {instance.n + 1}",
            "EDGE_WEIGHT_TYPE : EUC_2D",
            f"CAPACITY : {_num(instance.capacity)}",
            "NODE_COORD_SECTION",
        ]
        lines += [f"{i + 1} {float(x)!r} {float(y)!r}" for i, (x, y) in enumerate(instance.coords)]
        lines.append("DEMAND_SECTION")
        lines += [f"{i + 1} {_num(d)}" for i, d in enumerate(instance.node_demands)]
        lines += ["DEPOT_SECTION", "1", "-1", "EOF"]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_instance(path, round_distances: bool = False) -> Instance:
    """Read a native or VRPLIB file; the format is detected from the first line.

    ``round_distances`` applies the VRPLIB EUC_2D convention of rounding
    every distance to the nearest integer; by default distances are exact.
    """
    with open(path) as f:
        text = f.read()
    lines = text.splitlines()
    first = next((ln.strip() for ln in lines if ln.strip()), "")
    if first.startswith("CVRPLAB"):
        return _read_native(lines, path)
    return _read_vrplib(lines, path, round_distances)


def _read_native(lines, path) -> Instance:
    name, capacity, nodes = os.path.basename(str(path)), None, []
    for lineno, raw in enumerate(lines, 1):
        ln = raw.strip()
        if not ln:
            continue
        if ln.startswith("CVRPLAB"):
            if ln != NATIVE_HEADER:
                raise InstanceParseError(f"unsupported header {ln!r}", path, lineno)
            continue
        key, _, rest = ln.partition(" ")
        if key == "NAME":
            name = rest
        elif key == "CAPACITY":
            capacity = _parse_float(rest, path, lineno)
        else:
            parts = ln.split()
            if len(parts) != 4:
                raise InstanceParseError(f"expected 'idx x y demand', got {ln!r}", path, lineno)
            idx = int(_parse_float(parts[0], path, lineno))
            if idx != len(nodes):
                raise InstanceParseError(f"node index {idx} out of sequence", path, lineno)
            nodes.append((lineno, [_parse_float(p, path, lineno) for p in parts[1:]]))
    if capacity is None:
        raise InstanceParseError("missing CAPACITY", path)
    if len(nodes) < 2:
        raise InstanceParseError("need a depot and at least one customer", path)
    for lineno, (_, _, d) in nodes[1:]:
        if not 0 < d <= capacity:
            raise InstanceParseError(f"demand {d} outside (0, {capacity}]", path, lineno)
    arr = np.array([v for _, v in nodes])
    return Instance(depot=tuple(arr[0, :2]), customers=arr[1:, :2], demands=arr[1:, 2],
                    capacity=capacity, name=name)


def _parse_float(s, path, lineno) -> float:
    try:
        return float(s)
    except ValueError:
        raise InstanceParseError(f"not a number: {s!r}", path, lineno) from None


_VRPLIB_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION")


def _read_vrplib(lines, path, round_distances) -> Instance:
    header: Dict[str, str] = {}
    coords: Dict[int, tuple] = {}
    demands: Dict[int, tuple] = {}
    depots = []
    section = None
    saw_eof = False
    for lineno, raw in enumerate(lines, 1):
        ln = raw.strip()
        if not ln:
            continue
        up = ln.upper()
        if up == "EOF":
            saw_eof = True
            break
        if up in _VRPLIB_SECTIONS:
            section = up
            continue
        if up.endswith("_SECTION"):
            raise InstanceParseError(f"unsupported section {ln!r}", path, lineno)
        if ":" in ln and not ln[0].isdigit() and not ln[0] == "-":
            key, value = (s.strip() for s in ln.split(":", 1))
            header[key.upper()] = value
            section = None
            continue
        parts = ln.split()
        if section == "NODE_COORD_SECTION":
            if len(parts) != 3:
                raise InstanceParseError(f"malformed coordinate line {ln!r}", path, lineno)
            coords[int(_parse_float(parts[0], path, lineno))] = (
                _parse_float(parts[1], path, lineno), _parse_float(parts[2], path, lineno), lineno)
        elif section == "DEMAND_SECTION":
            if len(parts) != 2:
                raise InstanceParseError(f"malformed demand line {ln!r}", path, lineno)
            demands[int(_parse_float(parts[0], path, lineno))] = (_parse_float(parts[1], path, lineno), lineno)
        elif section == "DEPOT_SECTION":
            v = int(_parse_float(parts[0], path, lineno))
            if v != -1:
                depots.append(v)
        else:
            raise InstanceParseError(f"unexpected line {ln!r}", path, lineno)

    last = len(lines)
    if not coords:
        raise InstanceParseError("missing or empty NODE_COORD_SECTION", path, last)
    if not demands:
        raise InstanceParseError("missing DEMAND_SECTION", path, last)
    if "CAPACITY" not in header:
        raise InstanceParseError("missing CAPACITY", path, last)
    ewt = header.get("EDGE_WEIGHT_TYPE", "EUC_2D").upper()
    if ewt != "EUC_2D":
        raise InstanceParseError(f"unsupported EDGE_WEIGHT_TYPE {ewt}", path)
    if not saw_eof:
        log.debug("%s: no EOF marker", path)
    capacity = float(header["CAPACITY"])
    dim = int(header.get("DIMENSION", len(coords)))
    if sorted(coords) != list(range(1, dim + 1)):
        raise InstanceParseError(f"coordinate ids do not cover 1..{dim}", path, last)
    if sorted(demands) != list(range(1, dim + 1)):
        raise InstanceParseError(f"demand ids do not cover 1..{dim}", path, last)
    depot = depots[0] if depots else 1
    if len(depots) > 1:
        raise InstanceParseError("multiple depots are not supported", path)
    order = [depot] + [i for i in range(1, dim + 1) if i != depot]
    for i in order[1:]:
        d, lineno = demands[i]
        if not 0 < d <= capacity:
            raise InstanceParseError(f"node {i}: demand {d} outside (0, {capacity}]", path, lineno)
    xy = np.array([coords[i][:2] for i in order], dtype=np.float64)
    return Instance(depot=tuple(xy[0]), customers=xy[1:],
                    demands=np.array([demands[i][0] for i in order[1:]]),
                    capacity=capacity, name=header.get("NAME", os.path.basename(str(path))),
                    rounded=round_distances)


def load_references(path) -> Dict[str, float]:
    """Read ``name,cost`` rows; a header row ``name,cost`` is skipped."""
    refs: Dict[str, float] = {}
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise InstanceParseError(f"expected 'name,cost', got {row!r}", path, lineno)
            name, value = row[0].strip(), row[1].strip()
            if lineno == 1 and name.lower() == "name" and value.lower() == "cost":
                continue
            cost = _parse_float(value, path, lineno)
            if not cost > 0:
                raise InstanceParseError(f"reference cost must be positive, got {cost}", path, lineno)
            if name in refs:
                log.warning("%s:%d: duplicate reference %r, keeping the last", path, lineno, name)
            refs[name] = cost
    return refs
