import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvrplab.core import (Instance, Solution, StructureError, check_feasible, evaluate_cost,
                          flatten, optimality_gap, singleton_solution, split_tokens)

from conftest import make, random_instance


def two_customers(Q):
    return make((0, 0), [(0, 0.5), (0.5, 0)], [1, 1], Q)


def test_cost_two_back_and_forth_trips():
    inst = two_customers(1)
    assert evaluate_cost(inst, Solution.build(inst, [[1], [2]])) == pytest.approx(2.0, abs=1e-12)


def test_cost_single_route():
    inst = two_customers(2)
    cost = evaluate_cost(inst, Solution.build(inst, [[1, 2]]))
    assert cost == pytest.approx(1.0 + math.sqrt(0.5), abs=1e-12)


def test_customer_on_depot_costs_nothing():
    inst = make((0.3, 0.3), [(0.3, 0.3)], [1], 1)
    assert evaluate_cost(inst, Solution.build(inst, [[1]])) == 0.0


def test_duplicate_customer_flagged():
    inst = two_customers(2)
    verdict = check_feasible(inst, [[1], [1]])
    assert not verdict.ok
    assert any("duplicate customer 1" in v for v in verdict.violations)


def test_capacity_violation_flagged():
    inst = make((0, 0), [(1, 0), (0, 1)], [3, 3], 5)  # load 6 = Q + 1
    verdict = check_feasible(inst, [[1, 2]])
    assert not verdict.ok
    assert any("capacity" in v for v in verdict.violations)


def test_missing_customer_flagged():
    inst = two_customers(2)
    assert not check_feasible(inst, [[1]]).ok


def test_invalid_index_rejected():
    inst = two_customers(2)
    assert not check_feasible(inst, [[1, 2, 3]]).ok
    with pytest.raises(StructureError):
        Solution.build(inst, [[1, 7]])


@pytest.mark.parametrize("cost, ref, gap", [(100, 100, 0.0), (101, 100, 1.0),
                                            (15.6985, 15.8242, -0.794353)])
def test_optimality_gap(cost, ref, gap):
    assert optimality_gap(cost, ref).gap == pytest.approx(gap, abs=1e-6)


def test_gap_needs_positive_reference():
    with pytest.raises(ValueError):
        optimality_gap(1.0, 0.0)


def test_instance_validation():
    with pytest.raises(ValueError):
        make((0, 0), [(1, 1)], [5], 4)  # demand above capacity
    with pytest.raises(ValueError):
        make((0, 0), [(1, 1)], [-1], 4)
    with pytest.raises(ValueError):
        make((0, 0), [(np.nan, 1)], [1], 4)


def test_token_round_trip():
    routes = [(3, 1), (2,), (4, 5)]
    tokens = flatten(routes)
    assert tokens == [0, 3, 1, 0, 2, 0, 4, 5, 0]
    assert split_tokens(tokens) == routes


@given(st.integers(1, 12), st.integers(0, 10_000))
def test_cost_symmetries(n, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n, capacity=1e9)
    perm = rng.permutation(np.arange(1, n + 1))
    cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, 2), replace=False)) if n > 1 else []
    routes = [list(r) for r in np.split(perm, cuts)]
    base = evaluate_cost(inst, Solution.build(inst, routes))
    k = int(rng.integers(len(routes)))
    flipped = [r[::-1] if i == k else r for i, r in enumerate(routes)]
    assert abs(evaluate_cost(inst, Solution.build(inst, flipped)) - base) <= 1e-12
    shuffled = [routes[i] for i in rng.permutation(len(routes))]
    assert abs(evaluate_cost(inst, Solution.build(inst, shuffled)) - base) <= 1e-12
    if check_feasible(inst, routes).ok:
        assert math.isfinite(base) and base >= 0


def test_instance_equality_and_hash():
    a = make((0, 0), [(1, 1)], [1], 2)
    b = make((0, 0), [(1, 1)], [1], 2)
    assert a == b and hash(a) == hash(b)
    assert a != make((0, 0), [(1, 1.0000001)], [1], 2)


def test_singleton_solution_feasible(rng):
    inst = random_instance(rng, 10)
    assert check_feasible(inst, singleton_solution(inst)).ok
