"""Dense float64 numerics: seeded RNG streams, MLPs with hand-written backprop, Adam.

Random numbers come from numpy's Philox-4x64 counter-based bit generator keyed
by ``(seed, stream)``. Philox output is specified independently of CPU and OS,
so a given key and call sequence yields the same bits everywhere. Gaussians are
produced from that uniform stream with Box-Muller rather than numpy's ziggurat,
which keeps the transform explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import erf

from .errors import NumericError, ShapeError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Rng:
    """Single-owner random stream. Parallel work should use distinct ``stream`` ids."""

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)

    @property
    def counter(self) -> int:
        c = self._bitgen.state["state"]["counter"]
        return int(sum(int(w) << (64 * i) for i, w in enumerate(c)))

    def child(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)

    def uniform(self, size) -> np.ndarray:
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def integers(self, lo: int, hi: int, size=None):
        """Uniform integers in the closed range [lo, hi]."""
        return self._gen.integers(lo, hi, size=size, endpoint=True)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, rows: int, cols: int) -> np.ndarray:
        return gaussian_sample(self, rows, cols)


def gaussian_sample(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """i.i.d. standard normals of shape (rows, cols) via Box-Muller."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"gaussian_sample needs rows, cols >= 1, got ({rows}, {cols})")
    n = rows * cols
    pairs = (n + 1) // 2
    u = rng.uniform((pairs, 2))
    # 1 - u lies in (0, 1], so the log is finite
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = radius * np.cos(angle)
    z[:, 1] = radius * np.sin(angle)
    return z.reshape(-1)[:n].reshape(rows, cols)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def _gelu_with_grad(x: np.ndarray):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, cdf + x * (_INV_SQRT_2PI * np.exp(-0.5 * x * x))


def _identity_with_grad(x: np.ndarray):
    return x, np.ones_like(x)


# name -> (activation, activation and its derivative)
_ACTIVATIONS = {
    "gelu": (gelu, _gelu_with_grad),
    "identity": (lambda x: x, _identity_with_grad),
}


@dataclass
class Mlp:
    """Fully connected stack; the hidden activation is applied to every layer but the last.

    ``weights[i]`` has shape (fan_in, fan_out) and acts on row-vector batches.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "gelu"
    name: str = "mlp"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError(f"{self.name}: need one bias per weight matrix")
        if self.activation not in _ACTIVATIONS:
            raise ShapeError(f"{self.name}: unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"{self.name}.layer{i}: weight {w.shape} / bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"{self.name}.layer{i}: fan_in {w.shape[0]} does not match previous fan_out")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{self.name}.layer{i}.W", w
            yield f"{self.name}.layer{i}.b", b

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation, self.name)

    def zeros_like(self) -> "Mlp":
        return Mlp([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases],
                   self.activation, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        weights = [np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
        return cls(weights, biases, d["activation"], d["name"])


def init_mlp(sizes: Sequence[int], rng: Rng, activation: str = "gelu", name: str = "mlp",
             zero_last: bool = False) -> Mlp:
    """LeCun-normal weights, zero biases."""
    if len(sizes) < 2 or min(sizes) < 1:
        raise ShapeError(f"{name}: invalid layer sizes {list(sizes)}")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if zero_last and i == len(sizes) - 2:
            w = np.zeros((fan_in, fan_out))
        else:
            w = gaussian_sample(rng, fan_in, fan_out) / np.sqrt(fan_in)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, activation, name)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]   # input to each layer
    preacts: list[np.ndarray]  # pre-activation of each layer
    dacts: list[np.ndarray]    # activation derivative at each hidden pre-activation

    @property
    def last_hidden(self) -> np.ndarray:
        """Activations feeding the final layer."""
        return self.inputs[-1]


def _as_batch(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"{net.name}: expected input width {net.in_dim}, got shape {x.shape}")
    return x


def forward(net: Mlp, x: np.ndarray, return_cache: bool = False):
    act, act_grad = _ACTIVATIONS[net.activation]
    h = _as_batch(net, x)
    inputs, preacts, dacts = [], [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ w + b
        preacts.append(a)
        if i == last:
            h = a
        elif return_cache:
            h, d = act_grad(a)
            dacts.append(d)
        else:
            h = act(a)
    if return_cache:
        return h, ForwardCache(inputs, preacts, dacts)
    return h


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray, cache: ForwardCache | None = None):
    """Reverse-mode gradients of ``sum(upstream * forward(net, x))``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is Mlp-shaped.
    """
    if cache is None:
        _, cache = forward(net, x, return_cache=True)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise ShapeError(f"{net.name}: upstream gradient {g.shape} vs output {cache.preacts[-1].shape}")
    weights, biases = [None] * len(net.weights), [None] * len(net.biases)
    last = len(net.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * cache.dacts[i]
        weights[i] = cache.inputs[i].T @ g
        biases[i] = g.sum(axis=0)
        if i:
            g = g @ net.weights[i].T
    dx = g @ net.weights[0].T
    return Mlp(weights, biases, net.activation, net.name), dx


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _named(nets) -> list[tuple[str, np.ndarray]]:
    if isinstance(nets, Mlp):
        nets = [nets]
    return [pair for net in nets for pair in net.named_arrays()]


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` are an Mlp or a sequence of Mlps with matching shapes.
    """
    p_named, g_named = _named(params), _named(grads)
    if len(p_named) != len(g_named):
        raise ShapeError(f"adam_step: {len(p_named)} parameter arrays but {len(g_named)} gradients")
    for (name, p), (_, g) in zip(p_named, g_named):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: {name} has shape {p.shape}, gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeError(f"adam_step: moment shape for {name} does not match")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for (name, p), (_, g) in zip(p_named, g_named):
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
