import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvrplab.core import check_feasible
from cvrplab.decode import (BEAM_LOG_EPS, STRATEGIES, DeadEndError, DecodeConfig, DecodeState,
                            DistanceHeuristicPolicy, beam_search, best_of, decode, feasible_mask,
                            pomo_rollout, rollout, select_argmax, select_epsilon_greedy,
                            select_gumbel, select_softmax, softmax_probs, step_score)
from cvrplab.oracle import brute_force_optimum

from conftest import make, random_instance

DRAWS = 10_000


def freqs(draw, k, n=DRAWS):
    return np.bincount([draw() for _ in range(n)], minlength=k) / n


def test_mask_at_depot_start(rng):
    inst = random_instance(rng, 6)
    st_ = DecodeState.initial(inst)
    st_.advance(inst, 0)
    m = feasible_mask(inst, st_)
    assert not m[0] and m[1:].all()


def test_mask_with_empty_vehicle():
    inst = make((0, 0), [(1, 0), (0, 1), (1, 1)], [2, 1, 1], 2)
    st_ = DecodeState.initial(inst)
    st_.advance(inst, 0)
    st_.advance(inst, 1)
    assert st_.remaining_load == 0
    assert feasible_mask(inst, st_).tolist() == [True, False, False, False]


def test_argmax_examples():
    assert select_argmax(np.log([0.1, 0.7, 0.2])) == 1
    assert select_argmax(np.zeros(4)) == 0
    with pytest.raises(DeadEndError):
        select_argmax(np.full(3, -np.inf))


def test_softmax_uniform(rng):
    f = freqs(lambda: select_softmax(np.zeros(3), rng), 3)
    assert np.all(np.abs(f - 1 / 3) < 0.02)


def test_softmax_two_to_one(rng):
    f = freqs(lambda: select_softmax(np.array([math.log(2), 0.0]), rng), 2)
    assert np.all(np.abs(f - [2 / 3, 1 / 3]) < 0.02)


def test_masked_never_sampled(rng):
    logits = np.array([0.0, -np.inf, 1.0, -np.inf])
    for draw in (lambda: select_softmax(logits, rng), lambda: select_gumbel(logits, 1.0, rng),
                 lambda: select_gumbel(logits, 1e6, rng),
                 lambda: select_epsilon_greedy(logits, 1.0, rng)):
        f = freqs(draw, 4, 2000)
        assert f[1] == 0 and f[3] == 0


def test_gumbel_matches_softmax(rng):
    logits = np.array([0.3, -1.0, 1.2, 0.0])
    f = freqs(lambda: select_gumbel(logits, 1.0, rng), 4)
    tv = 0.5 * np.abs(f - softmax_probs(logits)).sum()
    assert tv < 0.02


def test_gumbel_temperature_limits(rng):
    logits = np.array([0.3, -1.0, 1.2, -np.inf, 0.0])
    cold = freqs(lambda: select_gumbel(logits, 1e-4, rng), 5)
    assert cold[2] > 0.999
    hot = freqs(lambda: select_gumbel(logits, 1e6, rng), 5)
    assert np.all(np.abs(hot[[0, 1, 2, 4]] - 0.25) < 0.02)


def test_epsilon_greedy(rng):
    logits = np.array([1.0, 0.0])
    assert freqs(lambda: select_epsilon_greedy(logits, 0.0, rng), 2)[0] == 1.0
    assert abs(freqs(lambda: select_epsilon_greedy(logits, 0.5, rng), 2)[0] - 0.75) < 0.02
    f = freqs(lambda: select_epsilon_greedy(np.array([3.0, 0.0, 1.0]), 1.0, rng), 3)
    assert np.all(np.abs(f - 1 / 3) < 0.02)


def test_epsilon_zero_is_argmax(rng):
    inst = random_instance(rng, 15)
    pol = DistanceHeuristicPolicy()
    a = pomo_rollout(pol, inst, strategy="argmax")
    b = pomo_rollout(pol, inst, strategy="epsilon_greedy", epsilon=0.0)
    assert [t.tokens for t in a] == [t.tokens for t in b]


@given(st.integers(1, 25), st.integers(0, 2**31), st.sampled_from(STRATEGIES))
def test_every_strategy_feasible(n, seed, strategy):
    inst = random_instance(np.random.default_rng(seed), n)
    res = decode(DistanceHeuristicPolicy(), inst, DecodeConfig(strategy, beam_size=3, seed=seed))
    for t in res.trajectories:
        assert check_feasible(inst, t.solution(inst)).ok
        assert t.cost == pytest.approx(t.solution(inst).cost, abs=1e-12)


def test_ten_thousand_rollouts_feasible():
    rng = np.random.default_rng(99)
    pol = DistanceHeuristicPolicy(0.2)
    count = 0
    while count < 10_000:
        inst = random_instance(rng, int(rng.integers(1, 16)))
        for strategy in STRATEGIES[:4]:
            for t in pomo_rollout(pol, inst, strategy=strategy, seed=count):
                assert check_feasible(inst, t.solution(inst)).ok
                count += 1


def test_logprob_bookkeeping(rng):
    inst = random_instance(rng, 10)
    pol = DistanceHeuristicPolicy(0.3)
    for strategy in ("argmax", "softmax_sample"):
        for t in pomo_rollout(pol, inst, strategy=strategy, seed=3):
            state = DecodeState.initial(inst)
            state.advance(inst, 0)
            state.advance(inst, t.tokens[1])
            total = 0.0
            for a in t.tokens[2:]:
                total += math.log(softmax_probs(pol.step(inst, state))[a])
                state.advance(inst, a)
            assert abs(total - t.logprob) < 1e-6


def test_beam_score_smoothing(rng):
    inst = random_instance(rng, 8)
    pol = DistanceHeuristicPolicy(0.3)
    res = beam_search(pol, inst, beam_size=3)
    for trajs in res.finals.values():
        for t in trajs:
            state = DecodeState.initial(inst)
            state.advance(inst, 0)
            state.advance(inst, t.tokens[1])
            score = 0.0
            for a in t.tokens[2:]:
                p = softmax_probs(pol.step(inst, state))[a]
                score += math.log(p) if state.selected_count <= 2 else math.log(p + BEAM_LOG_EPS)
                state.advance(inst, a)
            assert abs(score - t.logprob) < 1e-6
    assert step_score(0.5, 2) == math.log(0.5)
    assert step_score(0.5, 3) == math.log(0.5 + BEAM_LOG_EPS)


def test_pomo_one_is_plain_greedy(rng):
    inst = random_instance(rng, 12)
    pol = DistanceHeuristicPolicy()
    [t] = pomo_rollout(pol, inst, N=1)
    assert t.tokens == rollout(pol, inst, first=1).tokens


def test_best_of_is_minimum(rng):
    inst = random_instance(rng, 12)
    trajs = pomo_rollout(DistanceHeuristicPolicy(), inst, strategy="softmax_sample", seed=1)
    assert best_of(trajs).cost == min(t.cost for t in trajs)


def test_pomo_against_oracle():
    rng = np.random.default_rng(8)
    pol = DistanceHeuristicPolicy()
    hits = 0
    for _ in range(30):
        inst = random_instance(rng, int(rng.integers(2, 8)))
        best = best_of(pomo_rollout(pol, inst)).cost
        assert best <= rollout(pol, inst).cost + 1e-12
        opt = brute_force_optimum(inst).cost
        assert best >= opt - 1e-9
        hits += best <= opt + 1e-9
    print(f"pomo argmax reached the optimum on {hits}/30 instances")


@given(st.integers(1, 25), st.integers(0, 2**31))
def test_beam_one_is_argmax(n, seed):
    inst = random_instance(np.random.default_rng(seed), n)
    pol = DistanceHeuristicPolicy()
    beams = beam_search(pol, inst, beam_size=1)
    for t in pomo_rollout(pol, inst):
        assert beams.finals[t.start][0].tokens == t.tokens


def test_beam_best_logprob_grows_with_width(rng):
    for _ in range(10):
        inst = random_instance(rng, 7)
        pol = DistanceHeuristicPolicy(0.3)
        best = [beam_search(pol, inst, beam_size=b).max_logprob.logprob for b in (1, 2, 4, 8)]
        assert all(b >= a - 1e-12 for a, b in zip(best, best[1:]))


def test_decode_config_validation():
    with pytest.raises(ValueError):
        DecodeConfig("nucleus")
    with pytest.raises(ValueError):
        DecodeConfig(beam_size=0)
    with pytest.raises(ValueError):
        DecodeConfig(temperature=0.0)


def test_pomo_size_bounds(rng):
    inst = random_instance(rng, 4)
    with pytest.raises(ValueError):
        pomo_rollout(DistanceHeuristicPolicy(), inst, N=5)
