"""Random Re-Construct with greedy or simulated-annealing acceptance.

Each iteration cuts a random span out of the incumbent's flat tour,
re-decodes the span's customers between the two fixed boundary nodes, and
decides whether the rebuilt tour replaces the incumbent. The best tour seen
is kept separately and returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Instance, Solution
from .decode import DeadEndError, DecodeState, run_policy

ACCEPT_MODES = ("greedy", "simulated_annealing")


@dataclass(frozen=True)
class RrcConfig:
    iterations: int = 50
    seg_min: int = 4
    seg_max: Optional[int] = None  # None -> min(50, tour length)
    accept: str = "simulated_annealing"
    T0: Optional[float] = None  # None -> 1% of the initial cost
    cooling: float = 0.99
    strategy: str = "argmax"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.seg_min < 2:
            raise ValueError("seg_min must be >= 2")
        if self.seg_max is not None and self.seg_max < self.seg_min:
            raise ValueError("seg_max must be >= seg_min")
        if self.accept not in ACCEPT_MODES:
            raise ValueError(f"unknown acceptance mode {self.accept!r}")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")
        if self.T0 is not None and self.T0 < 0:
            raise ValueError("T0 must be >= 0")


@dataclass(frozen=True)
class Segment:
    """Tokens ``tokens[start:end]`` are rebuilt between ``tokens[start-1]`` and ``tokens[end]``."""
    start: int
    end: int
    before: int
    after: int


def sample_segment(tokens: Sequence[int], rng: np.random.Generator, seg_min: int = 4,
                   seg_max: Optional[int] = None) -> Segment:
    interior = len(tokens) - 2
    if interior < 1:
        raise ValueError("tour has no interior tokens")
    hi = min(seg_max if seg_max is not None else 50, interior)
    lo = min(seg_min, hi)
    length = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(1, interior - length + 2))
    end = start + length
    return Segment(start, end, int(tokens[start - 1]), int(tokens[end]))


def path_length(instance: Instance, path: Sequence[int]) -> float:
    d = instance.dist
    return float(sum(d[a, b] for a, b in zip(path[:-1], path[1:])))


def _load_run(instance, tokens, lo, hi, step):
    """Demand from tokens[lo] walking by ``step`` until a depot or ``hi``."""
    q = instance.node_demands
    total, i = 0.0, lo
    while i != hi and tokens[i] != 0:
        total += q[tokens[i]]
        i += step
    return total


def reconstruct_segment(policy, instance: Instance, tokens: Sequence[int], segment: Segment,
                        strategy: str = "argmax", rng: Optional[np.random.Generator] = None
                        ) -> Tuple[List[int], float]:
    """Rebuild one span; returns the new flat tour and its cost change.

    Load before the span is carried into the decoding state. If the rebuilt
    span ends with too little room for the customers after it, a depot visit
    is inserted so the tour stays feasible. Returns ``(tokens, inf)`` if the
    policy dead-ends.
    """
    tokens = list(tokens)
    s, e = segment.start, segment.end
    custs = [t for t in tokens[s:e] if t != 0]
    if not custs:
        return tokens, 0.0
    load_before = _load_run(instance, tokens, s - 1, -1, -1)
    load_after = _load_run(instance, tokens, e, len(tokens), 1)

    visited = np.ones(instance.n + 1, dtype=bool)
    visited[custs] = False
    state = DecodeState(segment.before, visited, instance.capacity - load_before,
                        [segment.before], selected_count=3, destination=segment.after,
                        n_unvisited=len(custs))
    try:
        run_policy(policy, instance, state, strategy, rng, stop=lambda st: st.n_unvisited == 0)
    except DeadEndError:
        return tokens, math.inf
    mid = state.partial[1:]
    if segment.after != 0 and state.remaining_load < load_after - 1e-12:
        mid.append(0)
    new_tokens = tokens[:s] + mid + tokens[e:]
    delta = (path_length(instance, [segment.before] + mid + [segment.after])
             - path_length(instance, tokens[s - 1:e + 1]))
    return new_tokens, delta


def accept(delta: float, temperature: float, rng: np.random.Generator, mode: str) -> bool:
    """Greedy: improvements only. SA: Metropolis, worse moves with prob exp(-delta/T).

    The generator is only consumed for a worsening move at positive
    temperature, so SA at T = 0 replays greedy exactly.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if delta < 0:
        return True
    if mode == "greedy" or temperature == 0 or not math.isfinite(delta):
        return False
    if mode != "simulated_annealing":
        raise ValueError(f"unknown acceptance mode {mode!r}")
    return bool(rng.random() < math.exp(-delta / temperature))


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    delta: float
    temperature: float
    accepted: bool
    incumbent_cost: float
    best_cost: float


@dataclass
class RrcResult:
    solution: Solution
    trace: List[TraceRow] = field(default_factory=list)


def rrc_run(policy, instance: Instance, initial: Solution, config: RrcConfig = RrcConfig()) -> RrcResult:
    rng = np.random.default_rng(config.seed)
    tokens = start_tokens = initial.tokens()
    inc_cost = initial.cost if initial.cost is not None else Solution.build(instance, initial.routes).cost
    best_tokens, best_cost = tokens, inc_cost
    T0 = 0.01 * inc_cost if config.T0 is None else config.T0
    trace = []
    for k in range(config.iterations):
        T = T0 * config.cooling ** k
        seg = sample_segment(tokens, rng, config.seg_min, config.seg_max)
        cand, delta = reconstruct_segment(policy, instance, tokens, seg, config.strategy, rng)
        ok = accept(delta, T, rng, config.accept)
        if ok:
            tokens = cand
            inc_cost = Solution.from_tokens(instance, tokens).cost
            if inc_cost < best_cost:
                best_tokens, best_cost = tokens, inc_cost
        trace.append(TraceRow(k, delta, T, ok, inc_cost, best_cost))
    if best_tokens is start_tokens:
        return RrcResult(Solution.build(instance, initial.routes), trace)
    return RrcResult(Solution.from_tokens(instance, best_tokens), trace)


TRACE_FIELDS = ("iteration", "delta", "temperature", "accepted", "incumbent_cost", "best_cost")


def write_trace(trace: Sequence[TraceRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_FIELDS)
        for r in trace:
            w.writerow([r.iteration, repr(r.delta), repr(r.temperature), int(r.accepted),
                        repr(r.incumbent_cost), repr(r.best_cost)])
