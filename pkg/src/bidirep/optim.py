"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


class DivergenceError(RuntimeError):
    """A parameter or moment became non-finite during an update."""


class AdamW:
    """Decoupled-weight-decay Adam over a fixed list of parameters.

    Weight decay is applied directly to the parameter (not through the
    gradient moments), so the update is

        p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)

    Parameters named in ``no_decay`` (biases, norm scales) skip the decay
    term.  Bias correction uses the shared step count, which starts at 0
    and increments once per ``step`` call.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        no_decay: set[str] | None = None,
    ):
        if not params:
            raise ValueError("AdamW needs at least one parameter")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.no_decay = set(no_decay or ())
        unknown = self.no_decay - set(self.params)
        if unknown:
            raise ValueError(f"no_decay names not in params: {sorted(unknown)}")
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient for {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if name not in self.no_decay and self.weight_decay != 0.0:
                update = update + self.weight_decay * p.data
            p.data = p.data - self.lr * update
            if not np.isfinite(p.data).all():
                raise DivergenceError(f"non-finite value in parameter {name!r}")


def cosine_anneal(step: int, total_steps: int, lr0: float, lr_min: float) -> float:
    """Cosine decay from lr0 at step 0 down to lr_min at step == total_steps."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
