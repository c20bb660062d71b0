"""Shared fixtures and the finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np
import pytest

from bidirep.autodiff import Tensor


def numeric_grad(evaluate, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function wrt array x.

    evaluate() must recompute the scalar from the current contents of x;
    x is perturbed in place and restored.
    """
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + h
        f_plus = evaluate()
        flat_x[i] = original - h
        f_minus = evaluate()
        flat_x[i] = original
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def grad_gap(build_loss, leaves: list[Tensor], h: float = 1e-5) -> float:
    """Worst relative disagreement between backward() and central differences.

    build_loss() must rebuild the scalar loss graph from the current leaf
    contents.  Relative error uses max(|analytic|, |numeric|, 1e-6) as the
    scale so near-zero gradients compare by absolute gap.
    """
    for leaf in leaves:
        leaf.zero_grad()
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = numeric_grad(lambda: float(build_loss().data), leaf.data, h=h)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        gap = float(np.max(np.abs(analytic - numeric) / scale))
        worst = max(worst, gap)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    from bidirep.synth import block_dataset

    return block_dataset(
        n_drugs=8, n_diseases=6, n_blocks=2, sim_noise=0.02, seed=11
    )


@pytest.fixture
def sparse_dataset():
    from bidirep.synth import random_dataset

    return random_dataset(n_drugs=12, n_diseases=9, density=0.2, seed=5)
