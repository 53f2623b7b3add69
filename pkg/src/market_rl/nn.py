"""Small tanh MLP with hand-written backprop, Adam, and a categorical head.

Everything runs in float64. Inputs may be a single vector or a batch of row
vectors; weights are stored as ``(fan_in, fan_out)`` so ``x @ W + b`` works
for both.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    def __init__(self, layer_sizes, rng=None, output_gain=1.0, hidden_gain=np.sqrt(2.0)):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = [int(n) for n in layer_sizes]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        n_layers = len(self.layer_sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            gain = output_gain if i == n_layers - 1 else hidden_gain
            self.weights.append(orthogonal((fan_in, fan_out), gain, rng))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @classmethod
    def from_arrays(cls, weights, biases) -> "Mlp":
        net = cls.__new__(cls)
        net.weights = [np.array(w, dtype=np.float64) for w in weights]
        net.biases = [np.array(b, dtype=np.float64) for b in biases]
        net.layer_sizes = [net.weights[0].shape[0]] + [w.shape[1] for w in net.weights]
        net._cache = None
        net.check()
        return net

    def check(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    @property
    def params(self) -> list:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp.from_arrays([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.layer_sizes[0]:
            raise ValueError(f"expected input of size {self.layer_sizes[0]}, got {x.shape[-1]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h

    __call__ = forward

    def backward(self, output_grad):
        """Gradients of ``sum(output * output_grad)`` from the last forward call.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        :attr:`params`. Batched inputs sum over the batch.
        """
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward()")
        acts = self._cache
        g = np.asarray(output_grad, dtype=np.float64)
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            if i < len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            inp = acts[i]
            if g.ndim == 1:
                grads[2 * i] = np.outer(inp, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = inp.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {data.get('format_version')!r}")
        net = cls.from_arrays(data["weights"], data["biases"])
        if net.layer_sizes != list(data["layer_sizes"]):
            raise ValueError("layer_sizes do not match stored weights")
        return net


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


@dataclass
class AdamState:
    shapes: list
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default=None)
    v: list = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = [np.zeros(s) for s in self.shapes]
        if self.v is None:
            self.v = [np.zeros(s) for s in self.shapes]

    @classmethod
    def for_params(cls, params, **kwargs) -> "AdamState":
        return cls([p.shape for p in params], **kwargs)

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "step": self.step,
                "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    @classmethod
    def from_dict(cls, data: dict) -> "AdamState":
        m = [np.array(a, dtype=np.float64) for a in data["m"]]
        v = [np.array(a, dtype=np.float64) for a in data["v"]]
        return cls([a.shape for a in m], data["learning_rate"], data["beta1"], data["beta2"],
                   data["eps"], data["step"], m, v)


def adam_step(state: AdamState, params, grads) -> None:
    """In-place bias-corrected Adam update of ``params``."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter / gradient / state counts differ")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.learning_rate:
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -- categorical distribution over logits (last axis) ----------------------

def logsumexp(logits):
    logits = np.asarray(logits, dtype=np.float64)
    top = np.max(logits, axis=-1, keepdims=True)
    return (top + np.log(np.sum(np.exp(logits - top), axis=-1, keepdims=True)))[..., 0]


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    return logits - logsumexp(logits)[..., None]


def softmax(logits):
    return np.exp(log_softmax(logits))


@dataclass(frozen=True)
class CategoricalDist:
    logits: np.ndarray

    @property
    def probs(self):
        return softmax(self.logits)


def categorical_log_prob(logits, actions):
    lp = log_softmax(logits)
    actions = np.asarray(actions)
    if lp.ndim == 1:
        return float(lp[int(actions)])
    return np.take_along_axis(lp, actions.astype(np.int64)[:, None], axis=-1)[:, 0]


def categorical_entropy(logits):
    lp = log_softmax(logits)
    return -np.sum(np.exp(lp) * lp, axis=-1)


def categorical_sample(logits, rng):
    """Inverse-CDF draw; one uniform per distribution in the batch."""
    probs = softmax(logits)
    cdf = np.cumsum(probs, axis=-1)
    if probs.ndim == 1:
        u = rng.random()
        return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), probs.shape[-1] - 1))
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=-1), probs.shape[-1] - 1)


def dumps(obj) -> str:
    """JSON text whose floats round-trip bit-exactly (shortest repr)."""
    return json.dumps(obj, sort_keys=True, allow_nan=False)
