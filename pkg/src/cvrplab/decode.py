"""Policy-agnostic solution construction.

A policy maps ``(instance, DecodeState)`` to a logit vector over all nodes
(depot = 0) with ``-inf`` at infeasible actions. Decoding follows the move
order of POMO beam search: move 1 is the depot, move 2 the designated start
customer, later moves are chosen by the policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Instance, Solution, route_length, split_tokens

# additive smoothing applied to beam scores from the fourth move on
BEAM_LOG_EPS = 1e-5

STRATEGIES = ("argmax", "softmax_sample", "gumbel_softmax", "epsilon_greedy", "beam")


class DeadEndError(RuntimeError):
    """No feasible action remains although the trajectory is incomplete."""


class DecodeState:
    __slots__ = ("current_node", "visited", "remaining_load", "partial", "logprob",
                 "selected_count", "destination", "n_unvisited")

    def __init__(self, current_node, visited, remaining_load, partial, logprob=0.0,
                 selected_count=0, destination=0, n_unvisited=None):
        self.current_node = current_node
        self.visited = visited
        self.remaining_load = remaining_load
        self.partial = partial
        self.logprob = logprob
        self.selected_count = selected_count
        self.destination = destination
        self.n_unvisited = int((~visited[1:]).sum()) if n_unvisited is None else n_unvisited

    @classmethod
    def initial(cls, instance: Instance) -> "DecodeState":
        visited = np.zeros(instance.n + 1, dtype=bool)
        visited[0] = True
        return cls(0, visited, instance.capacity, [])

    def copy(self) -> "DecodeState":
        return DecodeState(self.current_node, self.visited.copy(), self.remaining_load,
                           list(self.partial), self.logprob, self.selected_count,
                           self.destination, self.n_unvisited)

    def advance(self, instance: Instance, action: int) -> None:
        if action == 0:
            self.remaining_load = instance.capacity
        else:
            if self.visited[action]:
                raise ValueError(f"customer {action} already visited")
            self.visited[action] = True
            self.n_unvisited -= 1
            self.remaining_load -= instance.demands[action - 1]
        self.partial.append(action)
        self.current_node = action
        self.selected_count += 1

    @property
    def done(self) -> bool:
        return self.n_unvisited == 0 and self.current_node == 0 and self.selected_count > 1


def feasible_mask(instance: Instance, state: DecodeState) -> np.ndarray:
    """Boolean vector over nodes, True where the action is allowed."""
    allowed = ~state.visited
    allowed &= instance.node_demands <= state.remaining_load + 1e-12
    allowed[0] = False
    if state.selected_count == 0:
        allowed[:] = False
        allowed[0] = True
    elif state.current_node != 0:
        allowed[0] = True
    return allowed


def masked_logits(scores: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    out = np.full(len(allowed), -np.inf)
    out[allowed] = scores[allowed]
    return out


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.isfinite(logits)
    if not finite.any():
        raise DeadEndError("all actions are masked")
    z = np.where(finite, logits - logits[finite].max(), -np.inf)
    e = np.exp(z)
    return e / e.sum()


def step_score(prob: float, selected_count: int) -> float:
    """Beam score increment for a move taken when ``selected_count`` moves exist."""
    if selected_count <= 2:
        return math.log(prob) if prob > 0 else -math.inf
    return math.log(prob + BEAM_LOG_EPS)


# -- selection strategies ---------------------------------------------------

def select_argmax(logits) -> int:
    logits = np.asarray(logits, dtype=np.float64)
    if not (logits > -np.inf).any():
        raise DeadEndError("all actions are masked")
    return int(np.argmax(logits))


def select_softmax(logits, rng: np.random.Generator) -> int:
    p = softmax_probs(logits)
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, int(np.flatnonzero(p)[-1]))


def select_gumbel(logits, temperature: float, rng: np.random.Generator) -> int:
    """Hard Gumbel-max draw from softmax(logits / temperature)."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.isfinite(logits)
    if not finite.any():
        raise DeadEndError("all actions are masked")
    u = rng.random(len(logits))
    g = -np.log(-np.log(u))
    z = np.where(finite, logits, 0.0)
    z = z - z[finite].max()
    perturbed = np.where(finite, z / temperature + g, -np.inf)
    return int(np.argmax(perturbed))


def select_epsilon_greedy(logits, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.flatnonzero(np.isfinite(logits))
    if not len(finite):
        raise DeadEndError("all actions are masked")
    if rng.random() < epsilon:
        return int(finite[rng.integers(len(finite))])
    return select_argmax(logits)


# -- policies ---------------------------------------------------------------

class DistanceHeuristicPolicy:
    """Scores each feasible node by ``-distance(current, node) / scale``."""

    def __init__(self, scale: float = 0.1):
        self.scale = scale

    def step(self, instance: Instance, state: DecodeState) -> np.ndarray:
        allowed = feasible_mask(instance, state)
        return masked_logits(-instance.dist[state.current_node] / self.scale, allowed)


# -- rollouts ---------------------------------------------------------------

@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "argmax"
    pomo_size: Optional[int] = None  # None -> every customer is a start
    beam_size: int = 1
    epsilon: float = 0.1
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


# alias kept for callers that think of these knobs as beam settings
BeamConfig = DecodeConfig


@dataclass(frozen=True)
class Trajectory:
    tokens: Tuple[int, ...]
    logprob: float
    cost: float
    start: int

    def solution(self, instance: Instance) -> Solution:
        return Solution.from_tokens(instance, self.tokens)


def tokens_cost(instance: Instance, tokens: Sequence[int]) -> float:
    return sum(route_length(instance, r) for r in split_tokens(tokens))


def _choose(strategy, logits, rng, epsilon, temperature) -> int:
    if strategy == "argmax":
        return select_argmax(logits)
    if strategy == "softmax_sample":
        return select_softmax(logits, rng)
    if strategy == "gumbel_softmax":
        return select_gumbel(logits, temperature, rng)
    if strategy == "epsilon_greedy":
        return select_epsilon_greedy(logits, epsilon, rng)
    raise ValueError(f"strategy {strategy!r} is not a single-trajectory rule")


def run_policy(policy, instance: Instance, state: DecodeState, strategy: str = "argmax",
               rng: Optional[np.random.Generator] = None, epsilon: float = 0.1,
               temperature: float = 1.0, stop=None) -> DecodeState:
    """Advance ``state`` with the policy until ``stop(state)`` (default: done)."""
    stop = stop or (lambda s: s.done)
    while not stop(state):
        logits = policy.step(instance, state)
        a = _choose(strategy, logits, rng, epsilon, temperature)
        p = softmax_probs(logits)[a]
        if p <= 0:
            raise DeadEndError(f"selected masked action {a}")
        state.logprob += math.log(p)
        state.advance(instance, a)
    return state


def rollout(policy, instance: Instance, strategy: str = "argmax", first: Optional[int] = None,
            rng: Optional[np.random.Generator] = None, epsilon: float = 0.1,
            temperature: float = 1.0) -> Trajectory:
    """One trajectory; ``first`` forces the first customer, else the policy picks it."""
    state = DecodeState.initial(instance)
    state.advance(instance, 0)
    if first is not None:
        if not 1 <= first <= instance.n:
            raise ValueError(f"start {first} is not a customer")
        state.advance(instance, first)
    run_policy(policy, instance, state, strategy, rng, epsilon, temperature)
    tokens = tuple(state.partial)
    start = tokens[1]
    return Trajectory(tokens, state.logprob, tokens_cost(instance, tokens), start)


def trajectory_rng(seed: int, start: int, beam: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, start, beam])


def pomo_rollout(policy, instance: Instance, N: Optional[int] = None, strategy: str = "argmax",
                 seed: int = 0, epsilon: float = 0.1, temperature: float = 1.0) -> List[Trajectory]:
    """N trajectories; trajectory i is forced to start at customer i."""
    N = instance.n if N is None else N
    if not 1 <= N <= instance.n:
        raise ValueError(f"pomo size {N} needs 1 <= N <= {instance.n} customers")
    return [
        rollout(policy, instance, strategy, first=s, rng=trajectory_rng(seed, s),
                epsilon=epsilon, temperature=temperature)
        for s in range(1, N + 1)
    ]


def best_of(trajectories: Sequence[Trajectory]) -> Trajectory:
    return min(trajectories, key=lambda t: (t.cost, t.start))


@dataclass
class BeamResult:
    per_start: Dict[int, Optional[Trajectory]]  # best cost among the start's final beams
    finals: Dict[int, List[Trajectory]] = field(default_factory=dict)

    @property
    def best(self) -> Trajectory:
        return best_of([t for t in self.per_start.values() if t is not None])

    @property
    def max_logprob(self) -> Trajectory:
        alive = [t for beams in self.finals.values() for t in beams]
        return max(alive, key=lambda t: t.logprob)


def _top_actions(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest finite logits; ties go to the lower index."""
    idx = np.flatnonzero(np.isfinite(logits))
    order = np.lexsort((idx, -logits[idx]))
    return idx[order[:k]]


def beam_search(policy, instance: Instance, N: Optional[int] = None, beam_size: int = 1,
                seed: int = 0) -> BeamResult:
    """POMO beam search: N forced starts, beam_size partial trajectories per start.

    Each live beam proposes its beam_size most probable successors; the
    beam_size**2 candidates are re-pruned to the best beam_size by cumulative
    score. Finished beams are carried forward unchanged. ``seed`` is accepted
    for interface symmetry; the search is deterministic.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    N = instance.n if N is None else N
    if not 1 <= N <= instance.n:
        raise ValueError(f"pomo size {N} needs 1 <= N <= {instance.n} customers")
    per_start: Dict[int, Optional[Trajectory]] = {}
    finals: Dict[int, List[Trajectory]] = {}
    for s in range(1, N + 1):
        root = DecodeState.initial(instance)
        root.advance(instance, 0)
        root.advance(instance, s)
        beams = [root]
        while not all(b.done for b in beams):
            cands = []
            for k, b in enumerate(beams):
                if b.done:
                    cands.append((b.logprob, k, -1))
                    continue
                logits = policy.step(instance, b)
                probs = softmax_probs(logits)
                for a in _top_actions(logits, beam_size):
                    cands.append((b.logprob + step_score(probs[a], b.selected_count), k, int(a)))
            cands = [c for c in cands if c[0] > -math.inf]
            cands.sort(key=lambda c: (-c[0], c[1], c[2]))
            nxt = []
            for score, k, a in cands[:beam_size]:
                if a < 0:
                    nxt.append(beams[k])
                else:
                    child = beams[k].copy()
                    child.advance(instance, a)
                    child.logprob = score
                    nxt.append(child)
            beams = nxt
            if not beams:
                break
        if not beams:
            per_start[s] = None
            finals[s] = []
            continue
        trajs = [Trajectory(tuple(b.partial), b.logprob, tokens_cost(instance, b.partial), s)
                 for b in beams]
        finals[s] = trajs
        per_start[s] = min(trajs, key=lambda t: (t.cost, -t.logprob))
    if all(t is None for t in per_start.values()):
        raise DeadEndError("every beam died before completing a solution")
    return BeamResult(per_start, finals)


@dataclass(frozen=True)
class DecodeResult:
    best: Trajectory
    trajectories: List[Trajectory]


def decode(policy, instance: Instance, config: DecodeConfig = DecodeConfig()) -> DecodeResult:
    """Run one configured strategy and return every trajectory plus the best."""
    if config.strategy == "beam":
        res = beam_search(policy, instance, config.pomo_size, config.beam_size, config.seed)
        trajs = [t for t in res.per_start.values() if t is not None]
        return DecodeResult(res.best, trajs)
    trajs = pomo_rollout(policy, instance, config.pomo_size, config.strategy, config.seed,
                         config.epsilon, config.temperature)
    return DecodeResult(best_of(trajs), trajs)
