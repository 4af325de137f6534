"""Shared numerical oracles for the test suite.

These stay deliberately independent of the library's own computation paths:
finite differences for gradients, triple loops for matrix products, and
exhaustive enumeration for pooling windows.
"""

from __future__ import annotations

import numpy as np

from cattention.tensor import Tensor


def finite_difference_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar fn at x, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst-case |analytic - numeric| / max(|analytic|, |numeric|, floor).

    The floor is raised to 1e-3 of the tensor's largest gradient so that
    coordinates far below that scale are judged against it: the central
    difference's own roundoff (about |f| * 1e-11 at eps 1e-5) swamps any
    honest relative comparison there.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    biggest = max(np.abs(analytic).max(), np.abs(numeric).max(), 0.0)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), max(floor, 1e-3 * biggest))
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build_loss, leaves: dict[str, Tensor], eps: float = 1e-5) -> float:
    """Compare backward() grads on every leaf against central differences.

    `build_loss` must rebuild the forward graph from the leaves' current data
    each time it is called (the graph is single-use). Returns the worst
    relative error over all leaf coordinates.
    """
    loss = build_loss()
    loss.backward()
    analytic = {
        name: (np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy())
        for name, leaf in leaves.items()
    }
    worst = 0.0
    for name, leaf in leaves.items():

        def eval_at(values, _leaf=leaf):
            _leaf.data = np.asarray(values, dtype=np.float64)
            return float(build_loss().data)

        numeric = finite_difference_grad(eval_at, leaf.data.copy(), eps=eps)
        leaf.zero_grad()
        worst = max(worst, max_relative_error(analytic[name], numeric))
    return worst


def sampled_gradient_error(
    build_loss,
    leaves: dict[str, Tensor],
    rng: np.random.Generator,
    per_leaf: int = 3,
    eps: float = 1e-5,
) -> float:
    """Like check_gradients, but finite-differences only a few random
    coordinates per leaf. Lets a 100-seed sweep stay fast while every
    coordinate is still exercised across seeds."""
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for leaf in leaves.values():
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
        floor = max(1e-6, 1e-3 * np.abs(analytic).max())
        flat = leaf.data.reshape(-1)
        count = min(per_leaf, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for coord in coords:
            orig = flat[coord]
            flat[coord] = orig + eps
            hi = float(build_loss().data)
            flat[coord] = orig - eps
            lo = float(build_loss().data)
            flat[coord] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic.reshape(-1)[coord]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
        leaf.zero_grad()
    return worst


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Brute-force matrix product."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            total = 0.0
            for t in range(k):
                total += a[i, t] * b[t, j]
            out[i, j] = total
    return out


def conv_maxpool_exhaustive(
    x: np.ndarray, filters: np.ndarray, biases: np.ndarray
) -> tuple[np.ndarray, list[int]]:
    """Enumerate every window of every filter; return maxima and argmax starts."""
    n, d = x.shape
    m, k, d2 = filters.shape
    assert d == d2
    features = np.empty(m)
    starts = []
    for j in range(m):
        best = None
        best_w = 0
        for w in range(n - k + 1):
            score = float(np.sum(filters[j] * x[w : w + k]) + biases[j])
            if best is None or score > best:
                best = score
                best_w = w
        features[j] = best
        starts.append(best_w)
    return features, starts


def auc_all_pairs(scores, labels) -> float:
    """All-pairs comparison statistic; ties between classes count one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    assert pos and neg
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))
