"""Central finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_coords: int
    worst: tuple

    def passed(self, tol):
        return self.max_rel_error < tol


def _rel(a, n, floor):
    return abs(a - n) / max(abs(a), abs(n), floor)


def gradcheck(fn, inputs, n_coords=100, eps=1e-6, seed=0, floor=1e-5):
    """Compare autodiff gradients of scalar ``fn(*inputs)`` with central differences.

    ``inputs`` are Tensors with ``requires_grad=True``; ``n_coords`` random
    coordinates are drawn across all of them (all coordinates if fewer).
    Errors are relative to ``max(|analytic|, |numeric|)``, but never to less
    than ``floor`` times the largest analytic gradient, so coordinates with
    near-zero gradients are judged against the finite-difference noise
    level rather than against themselves.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.grad = None
    out = fn(*inputs)
    if out.size != 1:
        raise ValueError("gradcheck needs a scalar function")
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    scale = max(float(np.max(np.abs(a))) if a.size else 0.0 for a in analytic)
    floor = max(floor * scale, 1e-12)

    sizes = np.array([t.size for t in inputs])
    total = int(sizes.sum())
    flat = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, worst_at = 0.0, None
    for k in flat:
        i = int(np.searchsorted(offsets, k, side="right") - 1)
        j = int(k - offsets[i])
        t = inputs[i]
        view = t.data.reshape(-1)
        orig = view[j]
        view[j] = orig + eps
        fp = float(fn(*inputs).data)
        view[j] = orig - eps
        fm = float(fn(*inputs).data)
        view[j] = orig
        num = (fp - fm) / (2 * eps)
        a = float(analytic[i].reshape(-1)[j])
        err = _rel(a, num, floor)
        if err > worst:
            worst, worst_at = err, (i, j, a, num)
    return GradCheckResult(worst, len(flat), worst_at)


def weighted_sum(y, seed=1):
    """Scalar ``sum(w * y)`` with fixed random weights, so every output matters."""
    w = np.random.default_rng(seed).standard_normal(y.shape)
    return (y * Tensor(w)).sum()
