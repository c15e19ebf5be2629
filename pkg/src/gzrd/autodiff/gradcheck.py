"""Central finite-difference checks for the tape."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-7) -> float:
    """Norm-wise relative error ``|a - b| / max(|a|, |b|, floor)``.

    The floor keeps gradients that are identically zero (e.g. a key bias
    under softmax shift invariance) from dividing round-off by round-off.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(fn, tensors, eps=1e-6):
    """Central differences of scalar ``fn()`` w.r.t. every entry of each tensor."""
    grads = []
    with no_grad():
        for t in tensors:
            g = np.zeros_like(t.data, dtype=np.float64)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(fn().data)
                flat[i] = orig - eps
                down = float(fn().data)
                flat[i] = orig
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
    return grads


def analytic_grad(fn, tensors):
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    out = fn()
    out.backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def check_gradients(fn, tensors, eps=1e-6) -> float:
    """Largest per-tensor relative error between the tape and finite differences.

    Each tensor's denominator is floored at 1e-3 of the global gradient norm,
    so a tensor whose true gradient vanishes is judged on absolute error at
    the scale of the whole problem.
    """
    analytic = analytic_grad(fn, tensors)
    numeric = numeric_grad(fn, tensors, eps)
    total = np.sqrt(sum(float(np.square(a, dtype=np.float64).sum()) for a in analytic))
    floor = max(1e-3 * total, 1e-12)
    return max(relative_error(a, n, floor) for a, n in zip(analytic, numeric))


def directional_check(fn, tensors, rng, eps=1e-6) -> float:
    """Compare ``grad . v`` with a central difference along a random direction ``v``.

    One pair of forward passes checks every coordinate at once, which is
    what makes whole-model checks affordable.
    """
    analytic = analytic_grad(fn, tensors)
    directions = [rng.standard_normal(t.shape) for t in tensors]
    norm = np.sqrt(sum(float((d * d).sum()) for d in directions))
    directions = [d / norm for d in directions]
    predicted = sum(float((a.astype(np.float64) * d).sum()) for a, d in zip(analytic, directions))
    originals = [t.data.copy() for t in tensors]
    with no_grad():
        for t, d in zip(tensors, directions):
            t.data = (t.data + eps * d).astype(t.dtype)
        up = float(fn().data)
        for t, o, d in zip(tensors, originals, directions):
            t.data = (o - eps * d).astype(o.dtype)
        down = float(fn().data)
        for t, o in zip(tensors, originals):
            t.data = o
    measured = (up - down) / (2 * eps)
    return relative_error(np.array([predicted]), np.array([measured]))


def as_float64(*arrays) -> list[Tensor]:
    return [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
