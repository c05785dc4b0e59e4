"""Constructive heuristics: nearest neighbour, cheapest insertion, savings, sweep.

Ties are always broken toward the lowest customer index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import Instance, Solution

METHODS = ("nearest_sequential", "nearest_parallel", "insertion", "savings_parallel",
           "savings_sequential", "sweep", "sweep_2opt")


@dataclass(frozen=True)
class ConstructConfig:
    method: str = "savings_parallel"
    fleet_hint: Optional[int] = None
    seed: Optional[int] = None  # reserved: every constructor is deterministic

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.fleet_hint is not None and self.fleet_hint < 1:
            raise ValueError("fleet_hint must be >= 1")


def construct(instance: Instance, config: ConstructConfig = ConstructConfig()) -> Solution:
    m = config.method
    if m == "nearest_sequential":
        return nearest_neighbor(instance, "sequential")
    if m == "nearest_parallel":
        return nearest_neighbor(instance, "parallel", config.fleet_hint)
    if m == "insertion":
        return cheapest_insertion(instance)
    if m == "savings_parallel":
        return savings(instance, "parallel")
    if m == "savings_sequential":
        return savings(instance, "sequential")
    if m == "sweep":
        return sweep(instance, "circular")
    return sweep(instance, "cluster_then_2opt")


def min_fleet(instance: Instance) -> int:
    return max(1, math.ceil(instance.demands.sum() / instance.capacity - 1e-9))


# -- nearest neighbour ----------------------------------------------------------

def _nearest(d, q, frm, unrouted, room) -> Optional[int]:
    best, best_d = None, math.inf
    for c in unrouted:  # unrouted is kept sorted, so "<" keeps the lowest index on ties
        if q[c] <= room and d[frm, c] < best_d:
            best, best_d = c, d[frm, c]
    return best


def _sequential_routes(instance: Instance, unrouted: List[int]) -> List[List[int]]:
    d, q, Q = instance.dist, instance.node_demands, instance.capacity
    routes = []
    while unrouted:
        route, room, cur = [], Q, 0
        while True:
            c = _nearest(d, q, cur, unrouted, room)
            if c is None:
                break
            route.append(c)
            unrouted.remove(c)
            room -= q[c]
            cur = c
        routes.append(route)
    return routes


def nearest_neighbor(instance: Instance, mode: str = "sequential",
                     fleet_hint: Optional[int] = None) -> Solution:
    """Nearest feasible unrouted customer, one route at a time or K routes at once.

    In parallel mode each round extends each of the K routes by at most one
    customer; when two routes compete for a customer the cheaper extension
    wins. Once no route can grow, the rest is routed sequentially.
    """
    unrouted = list(range(1, instance.n + 1))
    if mode == "sequential":
        return Solution.build(instance, _sequential_routes(instance, unrouted))
    if mode != "parallel":
        raise ValueError(f"unknown mode {mode!r}")
    d, q, Q = instance.dist, instance.node_demands, instance.capacity
    K = fleet_hint or min_fleet(instance)
    routes: List[List[int]] = [[] for _ in range(K)]
    room = [Q] * K
    while unrouted:
        extended = set()
        while True:
            best = None
            for k in range(K):
                if k in extended:
                    continue
                frm = routes[k][-1] if routes[k] else 0
                for c in unrouted:
                    if q[c] <= room[k]:
                        key = (d[frm, c], c, k)
                        if best is None or key < best:
                            best = key
            if best is None:
                break
            _, c, k = best
            routes[k].append(c)
            room[k] -= q[c]
            unrouted.remove(c)
            extended.add(k)
        if not extended:
            routes.extend(_sequential_routes(instance, unrouted))
            break
    return Solution.build(instance, routes)


# -- cheapest insertion -----------------------------------------------------------

def cheapest_insertion(instance: Instance) -> Solution:
    """Repeatedly perform the globally cheapest feasible insertion.

    Opening a new route (cost 2 * c_0i) is always one of the options.
    """
    d, q, Q = instance.dist, instance.node_demands, instance.capacity
    unrouted = list(range(1, instance.n + 1))
    routes: List[List[int]] = []
    loads: List[float] = []
    while unrouted:
        best = None  # (cost, customer, route, position)
        for c in unrouted:
            key = (2 * d[0, c], c, len(routes), 0)
            for r, route in enumerate(routes):
                if loads[r] + q[c] > Q:
                    continue
                p = [0] + route + [0]
                for k in range(1, len(p)):
                    cost = d[p[k - 1], c] + d[c, p[k]] - d[p[k - 1], p[k]]
                    cand = (cost, c, r, k - 1)
                    if cand < key:
                        key = cand
            if best is None or key < best:
                best = key
        _, c, r, pos = best
        if r == len(routes):
            routes.append([c])
            loads.append(q[c])
        else:
            routes[r].insert(pos, c)
            loads[r] += q[c]
        unrouted.remove(c)
    return Solution.build(instance, routes)


# -- savings ----------------------------------------------------------------------

def saving(instance: Instance, i: int, j: int) -> float:
    d = instance.dist
    return float(d[i, 0] + d[0, j] - d[i, j])


def savings_list(instance: Instance) -> List[Tuple[float, int, int]]:
    """All pairs i < j with their saving, sorted once, largest first."""
    n = instance.n
    pairs = [(saving(instance, i, j), i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    return pairs


class _Routes:
    def __init__(self, instance: Instance):
        self.q = instance.node_demands
        self.Q = instance.capacity
        self.of = {c: c for c in range(1, instance.n + 1)}
        self.routes = {c: [c] for c in range(1, instance.n + 1)}
        self.load = {c: self.q[c] for c in range(1, instance.n + 1)}

    def mergeable(self, i, j) -> bool:
        a, b = self.of[i], self.of[j]
        if a == b or self.load[a] + self.load[b] > self.Q:
            return False
        ra, rb = self.routes[a], self.routes[b]
        return i in (ra[0], ra[-1]) and j in (rb[0], rb[-1])

    def merge(self, i, j) -> int:
        a, b = self.of[i], self.of[j]
        ra, rb = self.routes[a], self.routes[b]
        if ra[-1] != i:
            ra.reverse()
        if rb[0] != j:
            rb.reverse()
        ra.extend(rb)
        for c in rb:
            self.of[c] = a
        self.load[a] += self.load.pop(b)
        del self.routes[b]
        return a


def savings(instance: Instance, mode: str = "parallel", trace: Optional[list] = None) -> Solution:
    """Clarke-Wright savings from singleton routes.

    ``trace`` (optional list) receives the accepted ``(saving, i, j)`` merges
    in order.
    """
    pairs = savings_list(instance)
    rs = _Routes(instance)
    if mode == "parallel":
        for s, i, j in pairs:
            if rs.mergeable(i, j):
                rs.merge(i, j)
                if trace is not None:
                    trace.append((s, i, j))
    elif mode == "sequential":
        closed = set()
        while True:
            seed = next(((s, i, j) for s, i, j in pairs
                         if rs.of[i] not in closed and rs.of[j] not in closed and rs.mergeable(i, j)),
                        None)
            if seed is None:
                break
            cur = rs.merge(seed[1], seed[2])
            if trace is not None:
                trace.append(seed)
            while True:
                nxt = next(((s, i, j) for s, i, j in pairs
                            if (rs.of[i] == cur) != (rs.of[j] == cur)
                            and rs.of[i] not in closed and rs.of[j] not in closed
                            and rs.mergeable(i, j)), None)
                if nxt is None:
                    break
                cur = rs.merge(nxt[1], nxt[2])
                if trace is not None:
                    trace.append(nxt)
            closed.add(cur)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    routes = sorted(rs.routes.values(), key=lambda r: min(r))
    return Solution.build(instance, routes)


# -- sweep --------------------------------------------------------------------------

def polar_angles(instance: Instance) -> np.ndarray:
    """Angle of each customer about the depot in [0, 2pi); a customer on the depot gets 0."""
    rel = instance.customers - np.asarray(instance.depot)
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    ang = np.where(ang < 0, ang + 2 * np.pi, ang)
    ang = np.where(ang >= 2 * np.pi, 0.0, ang)
    ang[(rel[:, 0] == 0) & (rel[:, 1] == 0)] = 0.0
    return ang


def sweep(instance: Instance, tsp_mode: str = "circular") -> Solution:
    q, Q = instance.node_demands, instance.capacity
    ang = polar_angles(instance)
    order = [int(i) + 1 for i in np.lexsort((np.arange(instance.n), ang))]
    routes, cur, load = [], [], 0.0
    for c in order:
        if load + q[c] > Q:
            routes.append(cur)
            cur, load = [], 0.0
        cur.append(c)
        load += q[c]
    routes.append(cur)
    if tsp_mode == "cluster_then_2opt":
        from .improve import two_opt_route
        routes = [list(two_opt_route(instance, r)) for r in routes]
    elif tsp_mode != "circular":
        raise ValueError(f"unknown tsp_mode {tsp_mode!r}")
    return Solution.build(instance, routes)
