"""Problem and solution data model, cost evaluation and feasibility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

Route = Tuple[int, ...]


class StructureError(ValueError):
    """A solution references customers that do not exist or is malformed."""


@dataclass(frozen=True, eq=False)
class Instance:
    depot: Tuple[float, float]
    customers: np.ndarray  # (n, 2)
    demands: np.ndarray  # (n,)
    capacity: float
    name: str = "instance"
    rounded: bool = False  # VRPLIB EUC_2D: every distance rounded to the nearest integer

    def __post_init__(self):
        customers = np.asarray(self.customers, dtype=np.float64).reshape(-1, 2)
        demands = np.asarray(self.demands, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))
        object.__setattr__(self, "customers", customers)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", float(self.capacity))
        if len(customers) == 0:
            raise ValueError("instance needs at least one customer")
        if len(demands) != len(customers):
            raise ValueError(f"{len(demands)} demands for {len(customers)} customers")
        if not self.capacity > 0 or not math.isfinite(self.capacity):
            raise ValueError("capacity must be positive and finite")
        if not (np.all(np.isfinite(customers)) and all(map(math.isfinite, self.depot))):
            raise ValueError("coordinates must be finite")
        bad = np.flatnonzero((demands <= 0) | (demands > self.capacity))
        if len(bad):
            i = int(bad[0]) + 1
            raise ValueError(f"customer {i}: demand {demands[i - 1]} outside (0, {self.capacity}]")
        customers.setflags(write=False)
        demands.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.customers)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, depot first: shape (n + 1, 2)."""
        c = np.vstack([np.asarray(self.depot)[None, :], self.customers])
        c.setflags(write=False)
        return c

    @cached_property
    def node_demands(self) -> np.ndarray:
        d = np.concatenate([[0.0], self.demands])
        d.setflags(write=False)
        return d

    @cached_property
    def dist(self) -> np.ndarray:
        c = self.coords
        diff = c[:, None, :] - c[None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        if self.rounded:
            d = np.floor(d + 0.5)
        d.setflags(write=False)
        return d

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.name == other.name
            and self.depot == other.depot
            and self.capacity == other.capacity
            and self.rounded == other.rounded
            and np.array_equal(self.customers, other.customers)
            and np.array_equal(self.demands, other.demands)
        )

    def __hash__(self):
        return hash((self.name, self.depot, self.capacity, self.customers.tobytes(), self.demands.tobytes()))

    def with_coords(self, coords: np.ndarray, name: Optional[str] = None) -> "Instance":
        """Same demands and capacity, new node coordinates (depot row first)."""
        coords = np.asarray(coords, dtype=np.float64)
        return Instance(
            depot=tuple(coords[0]),
            customers=coords[1:],
            demands=self.demands,
            capacity=self.capacity,
            name=name or self.name,
            rounded=self.rounded,
        )


@dataclass(frozen=True)
class Solution:
    routes: Tuple[Route, ...]
    cost: Optional[float] = field(default=None, compare=False)

    @classmethod
    def build(cls, instance: Instance, routes: Iterable[Sequence[int]]) -> "Solution":
        rs = tuple(tuple(int(c) for c in r) for r in routes if len(r))
        return cls(rs, evaluate_routes(instance, rs))

    @classmethod
    def from_tokens(cls, instance: Instance, tokens: Sequence[int]) -> "Solution":
        return cls.build(instance, split_tokens(tokens))

    def tokens(self) -> List[int]:
        return flatten(self.routes)

    def customers(self) -> List[int]:
        return sorted(c for r in self.routes for c in r)


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: Tuple[str, ...] = ()

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class GapReport:
    method_cost: float
    reference_cost: float
    gap: float  # percent


def flatten(routes: Iterable[Sequence[int]]) -> List[int]:
    """Giant tour with depot tokens: [0, r1..., 0, r2..., 0]."""
    tokens = [0]
    for r in routes:
        if len(r):
            tokens.extend(int(c) for c in r)
            tokens.append(0)
    return tokens


def split_tokens(tokens: Sequence[int]) -> List[Route]:
    routes, cur = [], []
    for t in tokens:
        if t == 0:
            if cur:
                routes.append(tuple(cur))
            cur = []
        else:
            cur.append(int(t))
    if cur:
        routes.append(tuple(cur))
    return routes


def route_length(instance: Instance, route: Sequence[int]) -> float:
    if not len(route):
        return 0.0
    d = instance.dist
    total = d[0, route[0]] + d[route[-1], 0]
    for a, b in zip(route[:-1], route[1:]):
        total += d[a, b]
    return float(total)


def evaluate_routes(instance: Instance, routes: Iterable[Sequence[int]]) -> float:
    n = instance.n
    total = 0.0
    for r in routes:
        for c in r:
            if not 1 <= c <= n:
                raise StructureError(f"customer index {c} not in 1..{n}")
        total += route_length(instance, r)
    return total


def evaluate_cost(instance: Instance, solution: Solution) -> float:
    return evaluate_routes(instance, solution.routes)


def route_load(instance: Instance, route: Sequence[int]) -> float:
    return float(sum(instance.node_demands[c] for c in route))


def check_feasible(instance: Instance, solution) -> Feasibility:
    """Check coverage, uniqueness, index range, capacity and empty routes.

    ``solution`` may be a Solution or a plain list of routes.
    """
    routes = solution.routes if isinstance(solution, Solution) else solution
    n = instance.n
    problems = []
    seen = {}
    for k, r in enumerate(routes):
        if not len(r):
            problems.append(f"route {k}: empty")
            continue
        for c in r:
            if not 1 <= c <= n:
                problems.append(f"route {k}: invalid customer index {c}")
            elif c in seen:
                problems.append(f"route {k}: duplicate customer {c} (also in route {seen[c]})")
            else:
                seen[c] = k
        load = sum(instance.node_demands[c] for c in r if 1 <= c <= n)
        if load > instance.capacity:
            problems.append(f"route {k}: capacity violated, load {load:g} > {instance.capacity:g}")
    missing = [c for c in range(1, n + 1) if c not in seen]
    if missing:
        problems.append(f"unserved customers {missing}")
    return Feasibility(not problems, tuple(problems))


def optimality_gap(method_cost: float, reference_cost: float) -> GapReport:
    if not reference_cost > 0 or not math.isfinite(reference_cost):
        raise ValueError(f"reference cost must be positive, got {reference_cost}")
    gap = (method_cost - reference_cost) / reference_cost * 100.0
    return GapReport(float(method_cost), float(reference_cost), gap)


def singleton_solution(instance: Instance) -> Solution:
    return Solution.build(instance, [(i,) for i in range(1, instance.n + 1)])
