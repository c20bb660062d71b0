"""Prototype learning: encode similarity rows so cosines match the matrix.

One encoder per entity domain (drugs, diseases).  The encoder is a small
feedforward net applied identically to every entity's similarity row (a
shared-weight twin arrangement): the training loss sums, over entity
pairs i<j, the squared gap between the given similarity S_ij and the
cosine of the two encoded rows.  Trained encoders are frozen afterwards
and queried for a prototype table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .autodiff import Tensor, affine, gather_rows, no_grad, tsqrt, tsum
from .data import Dataset
from .optim import AdamW, DivergenceError, cosine_anneal

NORM_EPS = 1e-8


class DegenerateVectorError(ValueError):
    """A prototype has (near-)zero norm, so its cosine is undefined."""


@dataclass
class Stage1Config:
    """Hyperparameters for prototype training."""

    d0: int = 1024
    hidden: int = 1024
    lr: float = 0.01
    lr_min: float = 0.0
    epochs: int = 300
    pair_batch: int = 4096
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.d0 < 2:
            raise ValueError(f"prototype extent must be >= 2, got {self.d0}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.hidden < 1 or self.epochs < 0 or self.pair_batch < 1:
            raise ValueError("hidden, epochs, and pair_batch must be positive")


class PrototypeEncoder:
    """Feedforward map from a similarity row (extent n) to a d0 prototype."""

    def __init__(self, n_inputs: int, config: Stage1Config, rng: np.random.Generator):
        self.n_inputs = int(n_inputs)
        self.d0 = config.d0
        self.w1 = Tensor(_glorot(rng, n_inputs, config.hidden), requires_grad=True)
        self.b1 = Tensor(np.zeros(config.hidden), requires_grad=True)
        self.w2 = Tensor(_glorot(rng, config.hidden, config.d0), requires_grad=True)
        self.b2 = Tensor(np.zeros(config.d0), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def encode_rows(self, rows) -> Tensor:
        """Encode a batch of similarity rows (stacked as a matrix)."""
        rows = rows if isinstance(rows, Tensor) else Tensor(rows)
        if rows.ndim != 2 or rows.shape[1] != self.n_inputs:
            raise ValueError(
                f"expected rows of extent {self.n_inputs}, got shape {rows.shape}"
            )
        h = affine(rows, self.w1, self.b1, activation="relu")
        return affine(h, self.w2, self.b2)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def initial_representation(dataset: Dataset, kind: str, index: int) -> np.ndarray:
    """Row of the similarity matrix serving as the entity's raw feature."""
    S = {"drug": dataset.S_U, "disease": dataset.S_V}.get(kind)
    if S is None:
        raise ValueError(f"entity kind must be 'drug' or 'disease', got {kind!r}")
    if not 0 <= index < S.shape[0]:
        raise IndexError(f"{kind} index {index} outside 0..{S.shape[0] - 1}")
    return S[index].copy()


def encode(encoder: PrototypeEncoder, sim_row: np.ndarray) -> np.ndarray:
    """One entity's prototype (inference, no graph)."""
    row = np.asarray(sim_row, dtype=np.float64)
    if row.shape != (encoder.n_inputs,):
        raise ValueError(
            f"similarity row extent {row.shape} does not match encoder "
            f"input {encoder.n_inputs}"
        )
    with no_grad():
        return encoder.encode_rows(row.reshape(1, -1)).data[0]


def cosine_sim(p: np.ndarray, q: np.ndarray) -> float:
    """Plain cosine between two prototypes; rejects zero-norm inputs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"prototype extents differ: {p.shape} vs {q.shape}")
    np_, nq = np.linalg.norm(p), np.linalg.norm(q)
    if np_ < NORM_EPS or nq < NORM_EPS:
        raise DegenerateVectorError(
            f"prototype norm below {NORM_EPS} (norms {np_:.3e}, {nq:.3e})"
        )
    return float(p @ q / (np_ * nq))


def _pair_cosines(left: Tensor, right: Tensor) -> Tensor:
    """Row-wise cosine of two stacked prototype batches, with norm guard.

    The guard adds NORM_EPS to each norm so a zero-norm row yields cosine
    0 with finite gradients instead of dividing by zero; degenerate
    prototypes are rejected at inference by cosine_sim instead.
    """
    dots = tsum(left * right, axis=1)
    ln = tsqrt(tsum(left * left, axis=1)) + NORM_EPS
    rn = tsqrt(tsum(right * right, axis=1)) + NORM_EPS
    return dots / (ln * rn)


def stage1_loss(encoder: PrototypeEncoder, S: np.ndarray, pairs: np.ndarray) -> Tensor:
    """Sum over the given i<j pairs of (S_ij - cosine of encodings)^2."""
    pairs = np.asarray(pairs, dtype=np.intp)
    if pairs.size == 0:
        raise ValueError("pair set is empty")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError(f"pairs must be (n,2) index rows, got {pairs.shape}")
    if not (pairs[:, 0] < pairs[:, 1]).all():
        raise ValueError("pairs must satisfy i < j")
    # Encode each distinct row once; pairs reuse rows heavily.
    uniq, inverse = np.unique(pairs.reshape(-1), return_inverse=True)
    encoded = encoder.encode_rows(S[uniq])
    idx = inverse.reshape(pairs.shape)
    left = gather_rows(encoded, idx[:, 0])
    right = gather_rows(encoded, idx[:, 1])
    targets = S[pairs[:, 0], pairs[:, 1]]
    gaps = Tensor(targets) - _pair_cosines(left, right)
    return tsum(gaps * gaps)


def all_pairs(n: int) -> np.ndarray:
    """Every (i,j) with i < j, in row-major order."""
    iu = np.triu_indices(n, k=1)
    return np.stack(iu, axis=1).astype(np.intp)


def train_stage1(
    S: np.ndarray, config: Stage1Config, log=None
) -> tuple[PrototypeEncoder, list[float]]:
    """Fit an encoder to one similarity matrix; returns per-epoch mean loss.

    Each epoch visits all i<j pairs once in a seeded shuffle, sliced into
    minibatches of config.pair_batch pairs; AdamW with cosine-annealed
    learning rate.  Deterministic per config.seed.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {S.shape}")
    n = S.shape[0]
    rng = np.random.default_rng(config.seed)
    encoder = PrototypeEncoder(n, config, rng)
    pairs = all_pairs(n)
    opt = AdamW(
        encoder.params(),
        lr=config.lr,
        weight_decay=config.weight_decay,
        no_decay={"b1", "b2"},
    )
    total_steps = max(config.epochs * max(len(pairs) // config.pair_batch, 1), 1)
    step = 0
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), config.pair_batch):
            batch = pairs[order[start : start + config.pair_batch]]
            opt.lr = cosine_anneal(
                min(step, total_steps), total_steps, config.lr, config.lr_min
            )
            loss = stage1_loss(encoder, S, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite prototype loss at epoch {epoch}, step {step}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value / len(batch))
            step += 1
        epoch_losses.append(float(np.mean(losses)))
        if log is not None and (epoch % 25 == 0 or epoch == config.epochs - 1):
            log(f"stage1 epoch {epoch + 1}/{config.epochs} mean pair loss {epoch_losses[-1]:.6f}")
    return encoder, epoch_losses


def prototype_table(encoder: PrototypeEncoder, S: np.ndarray) -> np.ndarray:
    """All entities' prototypes, one row per similarity-matrix row."""
    S = np.asarray(S, dtype=np.float64)
    with no_grad():
        return encoder.encode_rows(S).data.copy()


def save_encoder(encoder: PrototypeEncoder, dirpath: str, domain: str) -> None:
    if domain not in ("drug", "disease"):
        raise ValueError(f"domain must be 'drug' or 'disease', got {domain!r}")
    meta = {
        "kind": "prototype_encoder",
        "domain": domain,
        "d0": str(encoder.d0),
        "n_inputs": str(encoder.n_inputs),
        "hidden": str(encoder.w1.shape[1]),
    }
    ckpt.save_params(
        dirpath, {k: v.data for k, v in encoder.params().items()}, meta
    )


def load_encoder(dirpath: str) -> tuple[PrototypeEncoder, dict[str, str]]:
    params, meta = ckpt.load_params(dirpath)
    if meta.get("kind") != "prototype_encoder":
        raise ckpt.CheckpointError(
            f"checkpoint at {dirpath} is not a prototype encoder"
        )
    n_inputs = int(meta["n_inputs"])
    d0 = int(meta["d0"])
    hidden = int(meta["hidden"])
    config = Stage1Config(d0=d0, hidden=hidden)
    encoder = PrototypeEncoder(n_inputs, config, np.random.default_rng(0))
    expected = {k: p.shape for k, p in encoder.params().items()}
    for name, tensor in encoder.params().items():
        if name not in params or params[name].shape != expected[name]:
            raise ckpt.CheckpointError(
                f"parameter {name!r} missing or mis-shaped in {dirpath}"
            )
        tensor.data = params[name]
    return encoder, meta
