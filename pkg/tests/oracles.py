"""Reference computations that share no code with the package under test."""

import math

import numpy as np


def central_diff_grad(f, arrays, h=1e-5, coords=None):
    """Central differences of scalar ``f()`` w.r.t. entries of ``arrays`` (perturbed in place).

    ``coords`` is a list of (array_index, flat_index); all entries when None.
    """
    if coords is None:
        coords = [(k, i) for k, a in enumerate(arrays) for i in range(a.size)]
    out = []
    for k, i in coords:
        flat = arrays[k].reshape(-1)
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    return np.array(out)


def sample_coords(arrays, per_array, rng):
    coords = []
    for k, a in enumerate(arrays):
        n = min(per_array, a.size)
        for i in rng.choice(a.size, size=n, replace=False):
            coords.append((k, int(i)))
    return coords


def max_rel_error(analytic, numeric, floor=1e-6):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def mlp_forward_loops(weights, biases, x, hidden_act):
    """Layer-by-layer evaluation with explicit Python loops."""
    h = list(map(float, x))
    for layer, (w, b) in enumerate(zip(weights, biases)):
        fan_in, fan_out = w.shape
        nxt = []
        for j in range(fan_out):
            acc = float(b[j])
            for i in range(fan_in):
                acc += h[i] * float(w[i, j])
            nxt.append(acc)
        if layer < len(weights) - 1:
            nxt = [hidden_act(v) for v in nxt]
        h = nxt
    return np.array(h)


def gelu_scalar(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def mann_whitney_pairs(scores, labels):
    """Brute-force P(anomaly > normal) + 0.5 P(tie) over every pair."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def product_loop(values):
    acc = 1.0
    for v in values:
        acc *= v
    return acc


def sinusoid_loop(t, dim):
    half = dim // 2
    out = []
    for k in range(half):
        omega = 10000.0 ** (k / (half - 1)) if half > 1 else 1.0
        out += [math.sin(t / omega), math.cos(t / omega)]
    return np.array(out)
