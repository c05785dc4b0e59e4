"""Central finite differences for the numpy policy."""

import numpy as np

from cvrplab.decode import DistanceHeuristicPolicy, pomo_rollout
from cvrplab.neural import (NeuralPolicy, PolicyParams, attention_layer_backward,
                            attention_layer_forward, decode_step_backward, decode_step_forward,
                            encode, reinforce_step, supervised_step, trajectory_logprob)

H = 1e-5
LAYER_KEYS = ("Wq", "Wk", "Wv", "Wo", "F1", "f1", "F2", "f2")


def rel_err(a, n):
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)


def numeric_grad(f, x, h=H):
    """d f / d x for an array ``x`` that ``f`` reads in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def max_err(analytic: dict, f, arrays: dict) -> float:
    return max(float(rel_err(analytic[k], numeric_grad(f, arrays[k])).max()) for k in arrays)


def small_params(seed=0, scale=1.0) -> PolicyParams:
    p = PolicyParams.init(embed_dim=4, heads=2, n_layers=2, ff_dim=8, seed=seed)
    for w in p.weights.values():
        w *= scale
    return p


def attention_layer_error(seed=0, nodes=3, dim=4, heads=2) -> float:
    rng = np.random.default_rng(seed)
    layer = {k: rng.normal(0, 0.5, s) for k, s in
             zip(LAYER_KEYS, [(dim, dim)] * 4 + [(dim, 2 * dim), (2 * dim,), (2 * dim, dim), (dim,)])}
    Hin = rng.normal(size=(nodes, dim))
    R = rng.normal(size=(nodes, dim))

    def f():
        return float((attention_layer_forward(layer, Hin, heads)[0] * R).sum())

    _, cache = attention_layer_forward(layer, Hin, heads)
    dH, g = attention_layer_backward(layer, cache, R, heads)
    g = dict(g, H=dH)
    return max_err(g, f, dict(layer, H=Hin))


def decode_step_error(instance, seed=0) -> float:
    params = small_params(seed)
    rng = np.random.default_rng(seed)
    H1 = encode(params, instance).copy()
    available = np.array([1, 2, 4] if instance.n >= 4 else list(range(1, instance.n + 1)))
    r = rng.normal(size=len(available))

    def f():
        return float(decode_step_forward(params, H1, 2, 0, available)[0] @ r)

    _, cache = decode_step_forward(params, H1, 2, 0, available)
    grads, dH1 = params.zeros_like(), np.zeros_like(H1)
    decode_step_backward(params, cache, r, dH1, grads)
    grads["H1"] = dH1
    return max_err(grads, f, dict(params.weights, H1=H1))


def supervised_error(instance, label, seed=0) -> float:
    params = small_params(seed)
    _, g = supervised_step(params, instance, label)
    return max_err(g, lambda: supervised_step(params, instance, label)[0], params.weights)


def reinforce_error(instance, seed=0) -> float:
    params = small_params(seed)
    rolls = pomo_rollout(NeuralPolicy(params), instance, strategy="softmax_sample", seed=seed)
    g, adv = reinforce_step(params, instance, rolls)
    n = len(rolls)

    def surrogate():
        return sum(a / n * trajectory_logprob(params, instance, t.tokens)[0] for t, a in zip(rolls, adv))

    return max_err(g, surrogate, params.weights)


def label_for(instance):
    """A fixed feasible label tour: the greedy distance-heuristic tour from customer 1."""
    return pomo_rollout(DistanceHeuristicPolicy(), instance, N=1)[0].tokens
