"""Toy light-encoder / heavy-decoder attention policy in numpy.

Forward and backward passes are written by hand. Arrays are row-major:
a node embedding is a row, a layer computes ``H @ W``. Each attention
layer is ``Hh = H + MHA(H)`` followed by ``H' = Hh + FF(Hh)``, with no
normalisation sub-layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Instance
from .decode import DecodeState, feasible_mask

LAYER_KEYS = ("Wq", "Wk", "Wv", "Wo", "F1", "f1", "F2", "f2")
CHECKPOINT_VERSION = 1


class NumericError(FloatingPointError):
    pass


@dataclass
class PolicyParams:
    embed_dim: int = 16
    heads: int = 2
    n_layers: int = 2  # decoder depth
    ff_dim: int = 32
    weights: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.weights:
            self.check()

    @classmethod
    def init(cls, embed_dim=16, heads=2, n_layers=2, ff_dim=None, seed=0) -> "PolicyParams":
        ff_dim = ff_dim or 2 * embed_dim
        p = cls(embed_dim, heads, n_layers, ff_dim)
        rng = np.random.default_rng(seed)
        for name, shape in p.shapes().items():
            bound = 1.0 / math.sqrt(p._fan_in(name, shape))
            p.weights[name] = rng.uniform(-bound, bound, size=shape)
        p.check()
        return p

    def _fan_in(self, name, shape):
        if len(shape) == 2:
            return shape[0]
        if name == "init.b":
            return 3
        return self.ff_dim if name.endswith(".f2") else self.embed_dim

    def layer_names(self) -> List[str]:
        return ["enc0"] + [f"dec{i}" for i in range(self.n_layers)]

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        d, f = self.embed_dim, self.ff_dim
        s = {"init.W": (3, d), "init.b": (d,)}
        for ln in self.layer_names():
            s.update({f"{ln}.Wq": (d, d), f"{ln}.Wk": (d, d), f"{ln}.Wv": (d, d), f"{ln}.Wo": (d, d),
                      f"{ln}.F1": (d, f), f"{ln}.f1": (f,), f"{ln}.F2": (f, d), f"{ln}.f2": (d,)})
        s.update({"W1": (d, d), "W2": (d, d), "WO": (d,)})
        return s

    def check(self) -> None:
        shapes = self.shapes()
        if set(shapes) != set(self.weights):
            missing = set(shapes) ^ set(self.weights)
            raise ValueError(f"weight names do not match the architecture: {sorted(missing)}")
        for k, shape in shapes.items():
            w = self.weights[k]
            if w.shape != shape:
                raise ValueError(f"{k}: shape {w.shape}, expected {shape}")
            if not np.all(np.isfinite(w)):
                raise NumericError(f"{k}: non-finite entries")

    def layer(self, name: str) -> Dict[str, np.ndarray]:
        return {k: self.weights[f"{name}.{k}"] for k in LAYER_KEYS}

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.embed_dim, self.heads, self.n_layers, self.ff_dim,
                            {k: v.copy() for k, v in self.weights.items()})

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.weights.items()}

    def step(self, grads: Dict[str, np.ndarray], lr: float) -> "PolicyParams":
        """New parameters ``w + lr * g`` (pass a negative lr to descend)."""
        out = self.copy()
        for k, g in grads.items():
            out.weights[k] += lr * g
        out.check()
        return out


def save_params(params: PolicyParams, path) -> None:
    meta = np.array([CHECKPOINT_VERSION, params.embed_dim, params.heads, params.n_layers,
                     params.ff_dim], dtype=np.int64)
    with open(path, "wb") as f:
        np.savez(f, __meta__=meta, **params.weights)


def load_params(path) -> PolicyParams:
    with np.load(path) as z:
        meta = z["__meta__"]
        if int(meta[0]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(meta[0])}")
        weights = {k: z[k] for k in z.files if k != "__meta__"}
    return PolicyParams(int(meta[1]), int(meta[2]), int(meta[3]), int(meta[4]), weights)


# -- multi-head attention -----------------------------------------------------

def _split(X, heads):
    m, d = X.shape
    return X.reshape(m, heads, d // heads).transpose(1, 0, 2)


def _merge(X):
    h, m, dh = X.shape
    return X.transpose(1, 0, 2).reshape(m, h * dh)


def _softmax_rows(S):
    S = S - S.max(axis=-1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=-1, keepdims=True)


def mha_forward(layer, H, heads):
    Q, K, V = H @ layer["Wq"], H @ layer["Wk"], H @ layer["Wv"]
    Qh, Kh, Vh = _split(Q, heads), _split(K, heads), _split(V, heads)
    scale = 1.0 / math.sqrt(Qh.shape[-1])
    A = _softmax_rows(Qh @ Kh.transpose(0, 2, 1) * scale)
    O = _merge(A @ Vh)
    return O @ layer["Wo"], (H, Qh, Kh, Vh, A, O, scale)


def mha_backward(layer, cache, dout, heads):
    H, Qh, Kh, Vh, A, O, scale = cache
    g = {"Wo": O.T @ dout}
    dOh = _split(dout @ layer["Wo"].T, heads)
    dA = dOh @ Vh.transpose(0, 2, 1)
    dVh = A.transpose(0, 2, 1) @ dOh
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
    dQ = _merge(dS @ Kh)
    dK = _merge(dS.transpose(0, 2, 1) @ Qh)
    dV = _merge(dVh)
    g["Wq"], g["Wk"], g["Wv"] = H.T @ dQ, H.T @ dK, H.T @ dV
    dH = dQ @ layer["Wq"].T + dK @ layer["Wk"].T + dV @ layer["Wv"].T
    return dH, g


# -- attention layer -----------------------------------------------------------

def attention_layer_forward(layer, H, heads):
    m, mcache = mha_forward(layer, H, heads)
    Hh = H + m
    Z = Hh @ layer["F1"] + layer["f1"]
    Ar = np.maximum(Z, 0.0)
    out = Hh + Ar @ layer["F2"] + layer["f2"]
    return out, (mcache, Hh, Z, Ar)


def attention_layer_backward(layer, cache, dout, heads):
    mcache, Hh, Z, Ar = cache
    g = {"F2": Ar.T @ dout, "f2": dout.sum(axis=0)}
    dZ = (dout @ layer["F2"].T) * (Z > 0)
    g["F1"] = Hh.T @ dZ
    g["f1"] = dZ.sum(axis=0)
    dHh = dout + dZ @ layer["F1"].T
    dH, gm = mha_backward(layer, mcache, dHh, heads)
    g.update(gm)
    return dHh + dH, g


def attention_layer(layer, H, heads: int = 1) -> np.ndarray:
    if len(H) == 0:
        raise ValueError("attention layer needs at least one row")
    return attention_layer_forward(layer, np.asarray(H, dtype=np.float64), heads)[0]


# -- encoder / decoder -----------------------------------------------------------

def node_features(instance: Instance) -> np.ndarray:
    """Rows (x, y, demand / Q), depot first with zero demand."""
    return np.column_stack([instance.coords, instance.node_demands / instance.capacity])


def _check_finite(X, where):
    if not np.all(np.isfinite(X)):
        raise NumericError(f"non-finite values after {where}")


def encode_forward(params: PolicyParams, instance: Instance):
    X = node_features(instance)
    H0 = X @ params.weights["init.W"] + params.weights["init.b"]
    _check_finite(H0, "initial projection")
    H1, lc = attention_layer_forward(params.layer("enc0"), H0, params.heads)
    _check_finite(H1, "encoder layer enc0")
    return H1, (X, lc)


def encode(params: PolicyParams, instance: Instance) -> np.ndarray:
    return encode_forward(params, instance)[0]


def encode_backward(params: PolicyParams, cache, dH1, grads):
    X, lc = cache
    dH0, g = attention_layer_backward(params.layer("enc0"), lc, dH1, params.heads)
    for k, v in g.items():
        grads[f"enc0.{k}"] += v
    grads["init.W"] += X.T @ dH0
    grads["init.b"] += dH0.sum(axis=0)


def decode_step_forward(params: PolicyParams, H1, start_idx, dest_idx, available):
    available = np.asarray(available, dtype=np.int64)
    if len(available) == 0:
        raise ValueError("decode step needs at least one available node")
    w = params.weights
    Ht = np.vstack([H1[start_idx] @ w["W1"], H1[dest_idx] @ w["W2"], H1[available]])
    caches = []
    for ln in params.layer_names()[1:]:
        Ht, c = attention_layer_forward(params.layer(ln), Ht, params.heads)
        caches.append(c)
    _check_finite(Ht, "decoder")
    u = Ht[2:] @ w["WO"]
    return u, (H1, start_idx, dest_idx, available, Ht, caches)


def decode_step_scores(params, H1, start_idx, dest_idx, available) -> np.ndarray:
    """Scores ``u`` for the available nodes (the two context slots are dropped)."""
    return decode_step_forward(params, H1, start_idx, dest_idx, available)[0]


def decode_step(params, H1, start_idx, dest_idx, available, n_nodes=None) -> np.ndarray:
    """Full logit vector over nodes, ``-inf`` outside ``available``."""
    available = np.asarray(available, dtype=np.int64)
    u = decode_step_scores(params, H1, start_idx, dest_idx, available)
    out = np.full(n_nodes or len(H1), -np.inf)
    out[available] = u
    return out


def decode_step_backward(params: PolicyParams, cache, du, dH1, grads) -> None:
    """Accumulate parameter gradients into ``grads`` and embedding gradients into ``dH1``."""
    H1, start_idx, dest_idx, available, Ht, caches = cache
    w = params.weights
    grads["WO"] += Ht[2:].T @ du
    dHt = np.zeros_like(Ht)
    dHt[2:] = np.outer(du, w["WO"])
    for ln, c in zip(reversed(params.layer_names()[1:]), reversed(caches)):
        dHt, g = attention_layer_backward(params.layer(ln), c, dHt, params.heads)
        for k, v in g.items():
            grads[f"{ln}.{k}"] += v
    grads["W1"] += np.outer(H1[start_idx], dHt[0])
    grads["W2"] += np.outer(H1[dest_idx], dHt[1])
    dH1[start_idx] += w["W1"] @ dHt[0]
    dH1[dest_idx] += w["W2"] @ dHt[1]
    np.add.at(dH1, available, dHt[2:])


class NeuralPolicy:
    """Decoding policy backed by PolicyParams; caches the encoding of the last instance."""

    def __init__(self, params: PolicyParams):
        self.params = params
        self._cached: Optional[Tuple[Instance, np.ndarray]] = None

    def embeddings(self, instance: Instance) -> np.ndarray:
        if self._cached is None or self._cached[0] is not instance:
            self._cached = (instance, encode(self.params, instance))
        return self._cached[1]

    def step(self, instance: Instance, state: DecodeState) -> np.ndarray:
        allowed = feasible_mask(instance, state)
        available = np.flatnonzero(allowed)
        if not len(available):
            return np.full(instance.n + 1, -np.inf)
        return decode_step(self.params, self.embeddings(instance), state.current_node,
                           state.destination, available, instance.n + 1)


def _log_softmax(u):
    z = u - u.max()
    return z - math.log(np.exp(z).sum())


def trajectory_logprob(params: PolicyParams, instance: Instance, tokens: Sequence[int],
                       with_grad: bool = False):
    """Teacher-forced log-probability of ``tokens`` (moves after the forced start).

    Returns ``(logprob, n_decisions, grads)``; ``grads`` holds d logprob / d params
    when ``with_grad`` is set, else None. Steps with a single feasible action
    contribute exactly zero and are not counted as decisions.
    """
    tokens = [int(t) for t in tokens]
    if len(tokens) < 2 or tokens[0] != 0:
        raise ValueError("token sequence must start with the depot and a customer")
    H1, enc_cache = encode_forward(params, instance)
    grads = params.zeros_like() if with_grad else None
    dH1 = np.zeros_like(H1) if with_grad else None
    state = DecodeState.initial(instance)
    state.advance(instance, tokens[0])
    state.advance(instance, tokens[1])
    total, decisions = 0.0, 0
    for a in tokens[2:]:
        allowed = feasible_mask(instance, state)
        if not allowed[a]:
            raise ValueError(f"token {a} is infeasible at step {state.selected_count}")
        available = np.flatnonzero(allowed)
        if len(available) > 1:
            u, cache = decode_step_forward(params, H1, state.current_node, state.destination,
                                           available)
            logp = _log_softmax(u)
            pos = int(np.searchsorted(available, a))
            total += logp[pos]
            decisions += 1
            if with_grad:
                du = -np.exp(logp)
                du[pos] += 1.0
                decode_step_backward(params, cache, du, dH1, grads)
        state.advance(instance, a)
    if with_grad:
        encode_backward(params, enc_cache, dH1, grads)
    return total, decisions, grads


def supervised_step(params: PolicyParams, instance: Instance, label) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean cross-entropy of the teacher-forced next-node choices and its gradient.

    ``label`` is a Solution or a flat token sequence.
    """
    tokens = label.tokens() if hasattr(label, "tokens") and callable(label.tokens) else list(label)
    logp, decisions, g = trajectory_logprob(params, instance, tokens, with_grad=True)
    if decisions == 0:
        return 0.0, params.zeros_like()
    scale = -1.0 / decisions
    return -logp / decisions, {k: v * scale for k, v in g.items()}


def shared_baseline_advantages(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    return r - r.mean()


def reinforce_step(params: PolicyParams, instance: Instance, rollouts):
    """Policy-gradient estimate with the POMO shared baseline.

    ``rollouts`` holds ``(tokens, reward)`` pairs or Trajectory objects
    (reward = -cost). Returns ``(grads, advantages)``; ``grads`` is the
    ascent direction (1/N) sum_i A_i grad log p(tau_i).
    """
    pairs = [(r.tokens, -r.cost) if hasattr(r, "tokens") else (r[0], r[1]) for r in rollouts]
    if len(pairs) < 2:
        raise ValueError("the shared baseline needs at least two rollouts")
    adv = shared_baseline_advantages([r for _, r in pairs])
    grads = params.zeros_like()
    n = len(pairs)
    for (tokens, _), a in zip(pairs, adv):
        if a == 0.0:
            continue
        _, _, g = trajectory_logprob(params, instance, tokens, with_grad=True)
        for k, v in g.items():
            grads[k] += (a / n) * v
    return grads, adv


def train_supervised(params: PolicyParams, data, epochs: int = 1, lr: float = 1e-3, log=None):
    """Plain gradient descent over ``(instance, label)`` pairs; returns params and loss history."""
    history = []
    for ep in range(epochs):
        losses = []
        for inst, label in data:
            loss, g = supervised_step(params, inst, label)
            params = params.step(g, -lr)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if log:
            log(f"epoch {ep}: mean loss {history[-1]:.6f}")
    return params, history


def train_reinforce(params: PolicyParams, instances, epochs: int = 1, lr: float = 1e-3,
                    pomo_size: Optional[int] = None, seed: int = 0, log=None):
    """POMO training: sampled rollouts from every start, shared baseline, gradient ascent."""
    from .decode import pomo_rollout

    history = []
    for ep in range(epochs):
        costs = []
        for i, inst in enumerate(instances):
            rolls = pomo_rollout(NeuralPolicy(params), inst, pomo_size, "softmax_sample",
                                 seed=int(np.random.SeedSequence([seed, ep, i]).generate_state(1)[0]))
            g, _ = reinforce_step(params, inst, rolls)
            params = params.step(g, lr)
            costs.append(np.mean([t.cost for t in rolls]))
        history.append(float(np.mean(costs)))
        if log:
            log(f"epoch {ep}: mean sampled cost {history[-1]:.6f}")
    return params, history
