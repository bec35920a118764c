"""Shared test helpers: finite-difference gradient checking, tiny fixtures."""

from __future__ import annotations

import numpy as np
import pytest


def central_diff(build_loss, tensor, flat_index: int) -> float:
    """d loss / d tensor[flat_index] by central differences, h scaled to |x|."""
    flat = tensor.data.reshape(-1)
    old = float(flat[flat_index])
    h = 1e-5 * max(1.0, abs(old))
    flat[flat_index] = old + h
    lp = build_loss().item()
    flat[flat_index] = old - h
    lm = build_loss().item()
    flat[flat_index] = old
    return (lp - lm) / (2.0 * h)


def max_grad_rel_err(build_loss, tensors, n_per_tensor=None, rng=None) -> float:
    """Worst relative error between analytic and numeric gradients.

    Checks every coordinate unless n_per_tensor caps it (then a seeded choice).
    The relative error uses a 1e-6 floor so coordinates whose true gradient is
    zero (dead ReLU paths) compare FD noise against zero instead of dividing
    by it.
    """
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "tensor missed by backward()"
        gflat = np.asarray(t.grad).reshape(-1)
        size = t.data.size
        if n_per_tensor is None or n_per_tensor >= size:
            picks = range(size)
        else:
            picks = rng.choice(size, size=n_per_tensor, replace=False)
        for k in picks:
            fd = central_diff(build_loss, t, int(k))
            an = float(gflat[int(k)])
            rel = abs(fd - an) / max(1e-6, abs(fd), abs(an))
            worst = max(worst, rel)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
