"""Exhaustive ground truth for tiny instances.

``brute_force_optimum`` enumerates set partitions and route orders.
``dp_optimum`` is an independently coded subset dynamic program used to
cross-check it. ``enumerate_trajectories`` walks the whole decoding tree of
a policy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .core import Instance, Solution, route_length, split_tokens


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    cost: float
    solution: Solution
    enumerated: int


def set_partitions(items: Sequence[int]) -> Iterator[List[List[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _best_order(instance: Instance, block: Tuple[int, ...]) -> Tuple[float, Tuple[int, ...], int]:
    d = instance.dist
    best, best_route, count = math.inf, block, 0
    for perm in itertools.permutations(block):
        # a route and its reverse cost the same; keep the one with the smaller first endpoint
        if len(perm) > 1 and perm[0] > perm[-1]:
            continue
        count += 1
        c = d[0, perm[0]] + d[perm[-1], 0]
        for a, b in zip(perm, perm[1:]):
            c += d[a, b]
        if c < best:
            best, best_route = c, perm
    return best, best_route, count


def brute_force_optimum(instance: Instance, n_limit: int = 9) -> OracleResult:
    n = instance.n
    if n > n_limit:
        raise OracleLimitError(f"{n} customers exceeds the brute-force limit {n_limit}")
    q = instance.node_demands
    cache: Dict[Tuple[int, ...], Tuple[float, Tuple[int, ...]]] = {}
    enumerated = 0
    best, best_routes = math.inf, None
    for part in set_partitions(list(range(1, n + 1))):
        if any(sum(q[c] for c in block) > instance.capacity for block in part):
            continue
        total, routes = 0.0, []
        for block in part:
            key = tuple(sorted(block))
            if key not in cache:
                c, r, cnt = _best_order(instance, key)
                cache[key] = (c, r)
                enumerated += cnt
            c, r = cache[key]
            total += c
            routes.append(r)
        if total < best:
            best, best_routes = total, sorted(routes)
    sol = Solution.build(instance, best_routes)
    return OracleResult(sol.cost, sol, enumerated)


def dp_optimum(instance: Instance) -> float:
    """Held-Karp route costs per subset, then a set-partition DP over bitmasks."""
    n = instance.n
    d = instance.dist
    q = instance.node_demands
    full = (1 << n) - 1
    # path[mask][j]: shortest depot -> ... -> customer j visiting exactly mask
    path = np.full((1 << n, n), np.inf)
    for j in range(n):
        path[1 << j, j] = d[0, j + 1]
    for mask in range(1, full + 1):
        for j in range(n):
            cur = path[mask, j]
            if not (mask >> j) & 1 or cur == np.inf:
                continue
            for k in range(n):
                if (mask >> k) & 1:
                    continue
                nm = mask | (1 << k)
                v = cur + d[j + 1, k + 1]
                if v < path[nm, k]:
                    path[nm, k] = v
    route = np.full(1 << n, np.inf)
    for mask in range(1, full + 1):
        load = sum(q[j + 1] for j in range(n) if (mask >> j) & 1)
        if load <= instance.capacity:
            route[mask] = min(path[mask, j] + d[j + 1, 0] for j in range(n) if (mask >> j) & 1)
    best = np.full(1 << n, np.inf)
    best[0] = 0.0
    for mask in range(1, full + 1):
        low = mask & -mask
        sub = mask
        while sub:
            if sub & low and route[sub] < np.inf:
                v = route[sub] + best[mask ^ sub]
                if v < best[mask]:
                    best[mask] = v
            sub = (sub - 1) & mask
    return float(best[full])


@dataclass(frozen=True)
class EnumeratedTrajectory:
    tokens: Tuple[int, ...]
    logprob: float
    cost: float


def enumerate_trajectories(policy, instance: Instance, n_limit: int = 6,
                           starts: Sequence[int] = None) -> List[EnumeratedTrajectory]:
    """Every feasible token sequence from each forced first customer.

    Scores use the same per-step rule as beam search, so the result is
    directly comparable with ``decode.beam_search``.
    """
    from .decode import DecodeState, feasible_mask, softmax_probs, step_score

    if instance.n > n_limit:
        raise OracleLimitError(f"{instance.n} customers exceeds the enumeration limit {n_limit}")
    if starts is None:
        starts = range(1, instance.n + 1)
    out: List[EnumeratedTrajectory] = []

    def walk(state: DecodeState):
        if state.done:
            tokens = tuple(state.partial)
            cost = sum(route_length(instance, r) for r in split_tokens(tokens))
            out.append(EnumeratedTrajectory(tokens, state.logprob, cost))
            return
        allowed = feasible_mask(instance, state)
        probs = softmax_probs(policy.step(instance, state))
        for a in np.flatnonzero(allowed):
            child = state.copy()
            child.logprob = state.logprob + step_score(probs[a], state.selected_count)
            child.advance(instance, int(a))
            walk(child)

    for s in starts:
        st = DecodeState.initial(instance)
        st.advance(instance, 0)
        st.advance(instance, int(s))
        walk(st)
    return out

