"""Intra- and inter-route neighbourhoods and a local-search driver.

Positions refer to the depot-padded route ``p = (0, c1, ..., cm, 0)``, so
customers sit at positions 1..m. A "gap" k means the slot between p[k-1]
and p[k]. Deltas are computed from the few edges a move touches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .core import Instance, Solution, StructureError

INTRA = ("relocate", "exchange", "two_opt", "or_opt")
INTER = ("two_opt_star", "insert_inter", "swap_inter", "cross", "lambda_interchange")
OPERATORS = INTRA + INTER

OR_OPT_LENGTHS = (1, 2, 3)
DEFAULT_PARAMS = {"cross": 3, "lambda_interchange": 2}

# moves must beat this to count as improving; guards against float-noise cycling
IMPROVEMENT_TOL = 1e-10


@dataclass(frozen=True)
class MoveSpec:
    operator: str
    indices: Tuple[int, ...]
    delta: float
    params: Tuple = ()
    source: Tuple = field(default=(), compare=False, repr=False)


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "first_improvement"
    operator_set: Tuple[str, ...] = OPERATORS
    max_passes: int = 10_000

    def __post_init__(self):
        if self.strategy not in ("first_improvement", "best_improvement"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not self.operator_set:
            raise ValueError("operator_set must not be empty")
        unknown = set(self.operator_set) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown operators {sorted(unknown)}")


class _Ctx:
    def __init__(self, instance: Instance, solution: Solution):
        self.d = instance.dist
        self.q = instance.node_demands
        self.Q = instance.capacity
        self.routes = solution.routes
        self.pad = [(0,) + r + (0,) for r in solution.routes]
        self.load = [sum(self.q[c] for c in r) for r in solution.routes]
        self.prefix = []
        for r in solution.routes:
            acc, pre = 0.0, [0.0]
            for c in r:
                acc += self.q[c]
                pre.append(acc)
            self.prefix.append(pre)

    def seg_load(self, r, i, length):
        pre = self.prefix[r]
        return pre[i - 1 + length] - pre[i - 1]


def _removal_gain(d, p, i, L):
    return d[p[i - 1], p[i + L]] - d[p[i - 1], p[i]] - d[p[i + L - 1], p[i + L]]


def _intra(ctx: _Ctx, operator: str, L_values=OR_OPT_LENGTHS) -> Iterator[MoveSpec]:
    d = ctx.d
    for r, p in enumerate(ctx.pad):
        m = len(p) - 2
        if operator == "two_opt":
            for i in range(1, m):
                for j in range(i + 1, m + 1):
                    delta = d[p[i - 1], p[j]] + d[p[i], p[j + 1]] - d[p[i - 1], p[i]] - d[p[j], p[j + 1]]
                    yield MoveSpec("two_opt", (r, i, j), delta, (), ctx.routes)
        elif operator == "exchange":
            for i in range(1, m):
                for j in range(i + 1, m + 1):
                    a, b = p[i], p[j]
                    if j == i + 1:
                        delta = (d[p[i - 1], b] + d[a, p[j + 1]]
                                 - d[p[i - 1], a] - d[b, p[j + 1]])
                    else:
                        delta = (d[p[i - 1], b] + d[b, p[i + 1]] + d[p[j - 1], a] + d[a, p[j + 1]]
                                 - d[p[i - 1], a] - d[a, p[i + 1]] - d[p[j - 1], b] - d[b, p[j + 1]])
                    yield MoveSpec("exchange", (r, i, j), delta, (), ctx.routes)
        else:
            lengths = (1,) if operator == "relocate" else L_values
            for L in lengths:
                for i in range(1, m - L + 2):
                    gain = _removal_gain(d, p, i, L)
                    first, last = p[i], p[i + L - 1]
                    q = p[:i] + p[i + L:]
                    for k in range(1, len(q)):
                        if k == i:
                            continue
                        delta = gain + d[q[k - 1], first] + d[last, q[k]] - d[q[k - 1], q[k]]
                        params = () if operator == "relocate" else (L,)
                        yield MoveSpec(operator, (r, i, k), delta, params, ctx.routes)


def _exchange_delta(d, pa, i, la, pb, j, lb, rev_a=False, rev_b=False):
    """Cost change when segment a[i:i+la] and b[j:j+lb] swap routes.

    An empty segment (length 0) is the gap before position i (resp. j).
    ``rev_a`` reverses a's segment as it enters b, likewise ``rev_b``.
    """
    def ends(p, i, L, rev):
        if L == 0:
            return None
        f, l = p[i], p[i + L - 1]
        return (l, f) if rev else (f, l)

    def side(p, i, L, old_ends, new_ends):
        before, after = p[i - 1], p[i + L]
        old = d[before, after] if old_ends is None else d[before, old_ends[0]] + d[old_ends[1], after]
        new = d[before, after] if new_ends is None else d[before, new_ends[0]] + d[new_ends[1], after]
        return new - old

    ea, eb = ends(pa, i, la, False), ends(pb, j, lb, False)
    return (side(pa, i, la, ea, ends(pb, j, lb, rev_b))
            + side(pb, j, lb, eb, ends(pa, i, la, rev_a)))


def _inter(ctx: _Ctx, operator: str, lam: int) -> Iterator[MoveSpec]:
    d, Q = ctx.d, ctx.Q
    R = len(ctx.pad)
    if operator == "insert_inter":
        for a in range(R):
            pa = ctx.pad[a]
            for i in range(1, len(pa) - 1):
                dem = ctx.q[pa[i]]
                for b in range(R):
                    if b == a or ctx.load[b] + dem > Q:
                        continue
                    pb = ctx.pad[b]
                    for k in range(1, len(pb)):
                        delta = _exchange_delta(d, pa, i, 1, pb, k, 0)
                        yield MoveSpec("insert_inter", (a, i, b, k), delta, (), ctx.routes)
        return
    for a in range(R):
        pa, ma = ctx.pad[a], len(ctx.pad[a]) - 2
        for b in range(a + 1, R):
            pb, mb = ctx.pad[b], len(ctx.pad[b]) - 2
            if operator == "two_opt_star":
                for i in range(ma + 1):
                    for j in range(mb + 1):
                        if (i, j) in ((0, 0), (ma, mb)):
                            continue
                        la_tail = ctx.load[a] - ctx.prefix[a][i]
                        lb_tail = ctx.load[b] - ctx.prefix[b][j]
                        if (ctx.prefix[a][i] + lb_tail > Q or ctx.prefix[b][j] + la_tail > Q):
                            continue
                        delta = (d[pa[i], pb[j + 1]] + d[pb[j], pa[i + 1]]
                                 - d[pa[i], pa[i + 1]] - d[pb[j], pb[j + 1]])
                        yield MoveSpec("two_opt_star", (a, b, i, j), delta, (), ctx.routes)
            elif operator == "swap_inter":
                for i in range(1, ma + 1):
                    for j in range(1, mb + 1):
                        qa, qb = ctx.q[pa[i]], ctx.q[pb[j]]
                        if ctx.load[a] - qa + qb > Q or ctx.load[b] - qb + qa > Q:
                            continue
                        delta = _exchange_delta(d, pa, i, 1, pb, j, 1)
                        yield MoveSpec("swap_inter", (a, i, b, j), delta, (), ctx.routes)
            else:
                revs = ((False, False),) if operator == "cross" else (
                    (False, False), (True, False), (False, True), (True, True))
                for la in range(0, min(lam, ma) + 1):
                    for lb in range(0, min(lam, mb) + 1):
                        if la == 0 and lb == 0 or (la == ma and lb == mb):
                            continue
                        for i in range(1, ma - la + 2):
                            sa = ctx.seg_load(a, i, la) if la else 0.0
                            for j in range(1, mb - lb + 2):
                                sb = ctx.seg_load(b, j, lb) if lb else 0.0
                                if ctx.load[a] - sa + sb > Q or ctx.load[b] - sb + sa > Q:
                                    continue
                                for ra, rb in revs:
                                    if (ra and la < 2) or (rb and lb < 2):
                                        continue
                                    delta = _exchange_delta(d, pa, i, la, pb, j, lb, ra, rb)
                                    idx = (a, i, la, b, j, lb)
                                    if operator == "lambda_interchange":
                                        idx += (int(ra), int(rb))
                                    yield MoveSpec(operator, idx, delta, (lam,), ctx.routes)


def enumerate_moves(instance: Instance, solution: Solution, operator: str,
                    params=None) -> Iterator[MoveSpec]:
    """Every capacity-feasible move of one operator class.

    ``params`` is the tuple of or-opt segment lengths for ``or_opt`` and the
    maximum segment length for ``cross`` / ``lambda_interchange``.
    """
    if operator not in OPERATORS:
        raise ValueError(f"unknown operator {operator!r}")
    ctx = _Ctx(instance, solution)
    if operator in INTRA:
        lengths = tuple(params) if operator == "or_opt" and params else OR_OPT_LENGTHS
        return _intra(ctx, operator, lengths)
    lam = params if params is not None else DEFAULT_PARAMS.get(operator, 1)
    return _inter(ctx, operator, lam)


def _swap_segments(ra, i, la, rb, j, lb, rev_a=False, rev_b=False):
    sa, sb = ra[i - 1:i - 1 + la], rb[j - 1:j - 1 + lb]
    if rev_a:
        sa = sa[::-1]
    if rev_b:
        sb = sb[::-1]
    return ra[:i - 1] + sb + ra[i - 1 + la:], rb[:j - 1] + sa + rb[j - 1 + lb:]


def apply_move(instance: Instance, solution: Solution, move: MoveSpec) -> Solution:
    """A new Solution with ``move`` applied; the input is left untouched."""
    routes = solution.routes
    if move.source is not routes and move.source != routes:
        raise StructureError("move was enumerated from a different solution")
    new: Dict[int, Tuple[int, ...]] = {}
    op, ix = move.operator, move.indices
    if op in ("relocate", "or_opt"):
        r, i, k = ix
        L = move.params[0] if move.params else 1
        route = routes[r]
        seg = route[i - 1:i - 1 + L]
        rest = route[:i - 1] + route[i - 1 + L:]
        new[r] = rest[:k - 1] + seg + rest[k - 1:]
    elif op == "exchange":
        r, i, j = ix
        route = list(routes[r])
        route[i - 1], route[j - 1] = route[j - 1], route[i - 1]
        new[r] = tuple(route)
    elif op == "two_opt":
        r, i, j = ix
        route = routes[r]
        new[r] = route[:i - 1] + route[i - 1:j][::-1] + route[j:]
    elif op == "two_opt_star":
        a, b, i, j = ix
        ra, rb = routes[a], routes[b]
        new[a], new[b] = ra[:i] + rb[j:], rb[:j] + ra[i:]
    elif op == "insert_inter":
        a, i, b, k = ix
        new[a], new[b] = _swap_segments(routes[a], i, 1, routes[b], k, 0)
    elif op == "swap_inter":
        a, i, b, j = ix
        new[a], new[b] = _swap_segments(routes[a], i, 1, routes[b], j, 1)
    elif op in ("cross", "lambda_interchange"):
        a, i, la, b, j, lb = ix[:6]
        ra_, rb_ = (bool(ix[6]), bool(ix[7])) if op == "lambda_interchange" else (False, False)
        new[a], new[b] = _swap_segments(routes[a], i, la, routes[b], j, lb, ra_, rb_)
    else:
        raise ValueError(f"unknown operator {op!r}")
    out = [new.get(k, r) for k, r in enumerate(routes)]
    return Solution.build(instance, out)


def _operator_params(op, params):
    if params and op in params:
        return params[op]
    return None


def best_move(instance, solution, operators, params=None) -> Optional[MoveSpec]:
    best = None
    for op in operators:
        for mv in enumerate_moves(instance, solution, op, _operator_params(op, params)):
            if best is None or mv.delta < best.delta:
                best = mv
    return best


def first_improving(instance, solution, operators, params=None) -> Optional[MoveSpec]:
    for op in operators:
        for mv in enumerate_moves(instance, solution, op, _operator_params(op, params)):
            if mv.delta < -IMPROVEMENT_TOL:
                return mv
    return None


def local_search(instance: Instance, solution: Solution, config: SearchConfig = SearchConfig(),
                 params=None, trace: Optional[List[float]] = None) -> Solution:
    """Apply improving moves until none is left or ``max_passes`` moves were applied."""
    if solution.cost is None:
        solution = Solution.build(instance, solution.routes)
    if trace is not None:
        trace.append(solution.cost)
    for _ in range(config.max_passes):
        if config.strategy == "best_improvement":
            mv = best_move(instance, solution, config.operator_set, params)
            if mv is None or mv.delta >= -IMPROVEMENT_TOL:
                break
        else:
            mv = first_improving(instance, solution, config.operator_set, params)
            if mv is None:
                break
        solution = apply_move(instance, solution, mv)
        if trace is not None:
            trace.append(solution.cost)
    return solution


def is_local_optimum(instance, solution, operators=OPERATORS, params=None) -> bool:
    return first_improving(instance, solution, operators, params) is None


def two_opt_route(instance: Instance, route: Sequence[int]) -> Tuple[int, ...]:
    """2-opt a single route to a local optimum."""
    sol = Solution.build(instance, [tuple(route)])
    sol = local_search(instance, sol, SearchConfig("first_improvement", ("two_opt",)))
    return sol.routes[0] if sol.routes else tuple(route)
