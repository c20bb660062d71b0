"""Sequence scoring: embed behavior sequences, attend, and predict.

A drug-disease cell is scored from one packed sequence of 2*L_max rows:
the target drug's training partners first (each a disease), then the
target disease's (each a drug).  Every row is the entity's prototype
fused with its similarity to the target, concatenated with a learned
embedding, and scaled by exp(temperature * label), so positive history
rows carry more weight.  A single multi-head self-attention layer with
residual+norm stages contextualizes the rows; the flattened output plus
aligned target features feed a small feedforward head that emits a logit.

Sequences shorter than L_max are zero-padded under an attention mask;
masked rows never influence statistics, attention, or outputs.  A fully
masked sequence (both sides empty) skips attention entirely and is scored
from the target's own features alone (the cold path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .autodiff import (
    BatchNormState,
    Tensor,
    affine,
    batch_norm,
    bce_with_logits,
    concat,
    gather_rows,
    matmul,
    no_grad,
    softmax_rows,
    transpose,
)
from .data import BehaviorSample, CellSplit, Dataset, SplitError, build_sample
from .optim import AdamW, DivergenceError, cosine_anneal

HEAD_WIDTHS = (256, 64)


@dataclass
class Stage2Config:
    """Hyperparameters and shape contract for the sequence model."""

    d0: int = 1024
    d_w: int = 64
    temperature: float = 2.0
    heads: int = 4
    l_max: int = 32
    lr: float = 1e-4
    lr_min: float = 0.0
    epochs: int = 30
    batch_size: int = 128
    weight_decay: float = 0.01
    embed_decay: bool = True
    fusion_activation: str = "relu"
    pool: str = "flatten"
    seed: int = 0

    def __post_init__(self):
        if self.d0 < 1 or self.d_w < 1:
            raise ValueError("d0 and d_w must be positive")
        if self.heads < 1:
            raise ValueError(f"head count must be >= 1, got {self.heads}")
        if (self.d0 + self.d_w) % self.heads != 0:
            raise ValueError(
                f"d0 + d_w = {self.d0 + self.d_w} is not divisible by "
                f"{self.heads} heads"
            )
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("lr must be > 0, epochs >= 0, batch_size >= 1")
        if self.fusion_activation not in ("relu", "none"):
            raise ValueError(
                f"fusion_activation must be 'relu' or 'none', got {self.fusion_activation!r}"
            )
        if self.pool not in ("flatten", "mean"):
            raise ValueError(f"pool must be 'flatten' or 'mean', got {self.pool!r}")

    @property
    def d1(self) -> int:
        return self.d0 + self.d_w

    @property
    def d_k(self) -> int:
        return self.d1 // self.heads

    @property
    def l_seq(self) -> int:
        return 2 * self.l_max

    @property
    def head_input(self) -> int:
        if self.pool == "flatten":
            return self.d1 * (2 + self.l_seq)
        return 3 * self.d1


@dataclass
class PackedSequence:
    """One sample's sequence matrix (L_seq x d1) plus validity mask.

    Drug-side rows come first.  Masked (padding) rows are all-zero.
    """

    x: Tensor
    mask: np.ndarray


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, *lead) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(*lead, fan_in, fan_out))


class Stage2Model:
    """Trainable sequence scorer bound to fixed prototype tables."""

    def __init__(
        self,
        config: Stage2Config,
        proto_u: np.ndarray,
        proto_v: np.ndarray,
        rng: np.random.Generator,
    ):
        proto_u = np.asarray(proto_u, dtype=np.float64)
        proto_v = np.asarray(proto_v, dtype=np.float64)
        if proto_u.ndim != 2 or proto_u.shape[1] != config.d0:
            raise ValueError(
                f"drug prototype table {proto_u.shape} does not match d0={config.d0}"
            )
        if proto_v.ndim != 2 or proto_v.shape[1] != config.d0:
            raise ValueError(
                f"disease prototype table {proto_v.shape} does not match d0={config.d0}"
            )
        self.config = config
        self.proto_u = proto_u
        self.proto_v = proto_v
        self.n_drugs = proto_u.shape[0]
        self.n_diseases = proto_v.shape[0]
        d0, d_w, d1, d_k = config.d0, config.d_w, config.d1, config.d_k

        def t(values):
            return Tensor(values, requires_grad=True)

        self.embed_u = t(rng.normal(0.0, 0.1, size=(self.n_drugs, d_w)))
        self.embed_v = t(rng.normal(0.0, 0.1, size=(self.n_diseases, d_w)))
        self.fuse_u_w = t(_glorot(rng, 2 * d0, d0))
        self.fuse_u_b = t(np.zeros(d0))
        self.fuse_v_w = t(_glorot(rng, 2 * d0, d0))
        self.fuse_v_b = t(np.zeros(d0))
        self.attn_q = t(_glorot(rng, d1, d_k, config.heads))
        self.attn_k = t(_glorot(rng, d1, d_k, config.heads))
        self.attn_v = t(_glorot(rng, d1, d_k, config.heads))
        self.attn_o = t(_glorot(rng, d1, d1))
        self.bn1_gamma = t(np.ones(d1))
        self.bn1_beta = t(np.zeros(d1))
        self.bn2_gamma = t(np.ones(d1))
        self.bn2_beta = t(np.zeros(d1))
        self.ffn1_w = t(_glorot(rng, d1, d1))
        self.ffn1_b = t(np.zeros(d1))
        self.ffn2_w = t(_glorot(rng, d1, d1))
        self.ffn2_b = t(np.zeros(d1))
        self.align_u_w = t(_glorot(rng, d0 + d_w, d1))
        self.align_u_b = t(np.zeros(d1))
        self.align_v_w = t(_glorot(rng, d0 + d_w, d1))
        self.align_v_b = t(np.zeros(d1))
        widths = (config.head_input,) + HEAD_WIDTHS + (1,)
        self.head_w = [t(_glorot(rng, a, b)) for a, b in zip(widths, widths[1:])]
        self.head_b = [t(np.zeros(b)) for b in widths[1:]]
        self.bn1_state = BatchNormState.initial(d1)
        self.bn2_state = BatchNormState.initial(d1)

    def params(self) -> dict[str, Tensor]:
        named = {
            "embed_u": self.embed_u,
            "embed_v": self.embed_v,
            "fuse_u_w": self.fuse_u_w,
            "fuse_u_b": self.fuse_u_b,
            "fuse_v_w": self.fuse_v_w,
            "fuse_v_b": self.fuse_v_b,
            "attn_q": self.attn_q,
            "attn_k": self.attn_k,
            "attn_v": self.attn_v,
            "attn_o": self.attn_o,
            "bn1_gamma": self.bn1_gamma,
            "bn1_beta": self.bn1_beta,
            "bn2_gamma": self.bn2_gamma,
            "bn2_beta": self.bn2_beta,
            "ffn1_w": self.ffn1_w,
            "ffn1_b": self.ffn1_b,
            "ffn2_w": self.ffn2_w,
            "ffn2_b": self.ffn2_b,
            "align_u_w": self.align_u_w,
            "align_u_b": self.align_u_b,
            "align_v_w": self.align_v_w,
            "align_v_b": self.align_v_b,
        }
        for i, (w, b) in enumerate(zip(self.head_w, self.head_b), start=1):
            named[f"head{i}_w"] = w
            named[f"head{i}_b"] = b
        return named

    def no_decay_names(self) -> set[str]:
        names = {
            name
            for name in self.params()
            if name.endswith("_b") or name.endswith("_beta") or name.endswith("_gamma")
        }
        if not self.config.embed_decay:
            names |= {"embed_u", "embed_v"}
        return names


# -- row construction ----------------------------------------------------------


def sim_pad(s: float, d0: int) -> np.ndarray:
    """Constant vector of extent d0 carrying one similarity value."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"similarity {s} outside [0,1]")
    return np.full(d0, float(s))


def fuse(model: Stage2Model, side: str, prototype, simvec) -> np.ndarray:
    """Project (prototype concat simvec) through the given side's fusion layer."""
    prototype = np.asarray(prototype, dtype=np.float64)
    simvec = np.asarray(simvec, dtype=np.float64)
    d0 = model.config.d0
    if prototype.shape != (d0,) or simvec.shape != (d0,):
        raise ValueError(
            f"fuse expects two vectors of extent {d0}, got "
            f"{prototype.shape} and {simvec.shape}"
        )
    if side == "drug":
        w, b = model.fuse_u_w, model.fuse_u_b
    elif side == "disease":
        w, b = model.fuse_v_w, model.fuse_v_b
    else:
        raise ValueError(f"side must be 'drug' or 'disease', got {side!r}")
    stacked = np.concatenate([prototype, simvec]).reshape(1, -1)
    with no_grad():
        return affine(
            Tensor(stacked), w, b, activation=model.config.fusion_activation
        ).data[0]


def rating_scale(h_concat, a: int, temperature: float) -> np.ndarray:
    """Scale a row by exp(temperature * label); label must be 0 or 1."""
    if a not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {a!r}")
    return np.asarray(h_concat, dtype=np.float64) * math.exp(temperature * a)


def _truncate_positions(seq, sims: np.ndarray, l_max: int) -> list[int]:
    """Positions (into seq) of the kept elements, in original order.

    Keeps the l_max highest-similarity elements relative to the target;
    ties broken by ascending entity index.
    """
    if len(seq) <= l_max:
        return list(range(len(seq)))
    order = sorted(range(len(seq)), key=lambda p: (-sims[p], seq[p][0]))
    return sorted(order[:l_max])


@dataclass
class PackedBatch:
    """Stacked per-sample index arrays driving the batched forward pass.

    Rows gather constants (prototypes, similarities, labels) and trainable
    embeddings; padded slots carry index 0 with valid = 0 and are zeroed.
    """

    drug: np.ndarray
    disease: np.ndarray
    label: np.ndarray
    j_idx: np.ndarray
    j_sim: np.ndarray
    j_lab: np.ndarray
    j_valid: np.ndarray
    i_idx: np.ndarray
    i_sim: np.ndarray
    i_lab: np.ndarray
    i_valid: np.ndarray

    def __len__(self) -> int:
        return self.drug.shape[0]

    def take(self, rows: np.ndarray) -> "PackedBatch":
        return PackedBatch(
            **{name: getattr(self, name)[rows] for name in _PACKED_FIELDS}
        )

    @property
    def mask(self) -> np.ndarray:
        return np.concatenate([self.j_valid, self.i_valid], axis=1)


_PACKED_FIELDS = (
    "drug",
    "disease",
    "label",
    "j_idx",
    "j_sim",
    "j_lab",
    "j_valid",
    "i_idx",
    "i_sim",
    "i_lab",
    "i_valid",
)


def pack_samples(
    config: Stage2Config, dataset: Dataset, samples: list[BehaviorSample]
) -> PackedBatch:
    """Truncate and stack samples into padded index arrays."""
    n = len(samples)
    l_max = config.l_max
    out = {
        "drug": np.zeros(n, dtype=np.intp),
        "disease": np.zeros(n, dtype=np.intp),
        "label": np.zeros(n),
        "j_idx": np.zeros((n, l_max), dtype=np.intp),
        "j_sim": np.zeros((n, l_max)),
        "j_lab": np.zeros((n, l_max)),
        "j_valid": np.zeros((n, l_max)),
        "i_idx": np.zeros((n, l_max), dtype=np.intp),
        "i_sim": np.zeros((n, l_max)),
        "i_lab": np.zeros((n, l_max)),
        "i_valid": np.zeros((n, l_max)),
    }
    for b, s in enumerate(samples):
        out["drug"][b] = s.drug
        out["disease"][b] = s.disease
        out["label"][b] = s.label
        j_sims = np.array([dataset.S_V[s.disease, j] for j, _ in s.drug_seq])
        for t, p in enumerate(_truncate_positions(s.drug_seq, j_sims, l_max)):
            j, lab = s.drug_seq[p]
            out["j_idx"][b, t] = j
            out["j_sim"][b, t] = dataset.S_V[s.disease, j]
            out["j_lab"][b, t] = lab
            out["j_valid"][b, t] = 1.0
        i_sims = np.array([dataset.S_U[s.drug, i] for i, _ in s.disease_seq])
        for t, p in enumerate(_truncate_positions(s.disease_seq, i_sims, l_max)):
            i, lab = s.disease_seq[p]
            out["i_idx"][b, t] = i
            out["i_sim"][b, t] = dataset.S_U[s.drug, i]
            out["i_lab"][b, t] = lab
            out["i_valid"][b, t] = 1.0
    return PackedBatch(**out)


def _sequence_rows(model: Stage2Model, batch: PackedBatch) -> Tensor:
    """Batched row construction: fuse, append embedding, rating-scale.

    Returns X of shape (B, L_seq, d1) with padded rows exactly zero.
    """
    cfg = model.config
    d0 = cfg.d0
    sides = []
    for idx, sim, lab, valid, protos, embed, fuse_w, fuse_b in (
        (
            batch.j_idx,
            batch.j_sim,
            batch.j_lab,
            batch.j_valid,
            model.proto_v,
            model.embed_v,
            model.fuse_u_w,
            model.fuse_u_b,
        ),
        (
            batch.i_idx,
            batch.i_sim,
            batch.i_lab,
            batch.i_valid,
            model.proto_u,
            model.embed_u,
            model.fuse_v_w,
            model.fuse_v_b,
        ),
    ):
        b, l = idx.shape
        fuse_in = np.concatenate(
            [protos[idx], np.broadcast_to(sim[..., None], (b, l, d0))], axis=2
        )
        h = affine(
            Tensor(fuse_in.reshape(b * l, 2 * d0)),
            fuse_w,
            fuse_b,
            activation=cfg.fusion_activation,
        )
        w_rows = gather_rows(embed, idx.reshape(-1))
        rows = concat([h, w_rows], axis=1).reshape(b, l, cfg.d1)
        scale = (np.exp(cfg.temperature * lab) * valid)[..., None]
        sides.append(rows * scale)
    return concat(sides, axis=1)


# -- transformer ----------------------------------------------------------------


def _masked_batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    mask: np.ndarray,
    mode: str,
) -> Tensor:
    """BN over (batch x position) rows jointly, masked rows excluded and re-zeroed."""
    b, l, d1 = x.shape
    flat = x.reshape(b * l, d1)
    if mode == "train":
        out = batch_norm(
            flat, gamma, beta, state, mode="train", row_weights=mask.reshape(-1)
        )
    else:
        out = batch_norm(flat, gamma, beta, state, mode="inference")
    return out.reshape(b, l, d1) * mask[..., None]


def _transformer_batch(
    model: Stage2Model, x: Tensor, mask: np.ndarray, mode: str
) -> tuple[Tensor, np.ndarray]:
    """Attention + residual/norm stages over a batch; returns (output, cold).

    cold[b] is True when sample b has no valid rows; such samples bypass
    attention semantics by receiving a uniform (all-zero) additive mask,
    which is exact because their value rows are all zero and every row is
    re-zeroed afterwards.
    """
    if mode not in ("train", "inference"):
        raise ValueError(f"mode must be 'train' or 'inference', got {mode!r}")
    cfg = model.config
    b, l, d1 = x.shape
    cold = mask.sum(axis=1) == 0
    if cold.all():
        return Tensor(np.zeros((b, l, d1))), cold
    x4 = x.reshape(b, 1, l, d1)
    q = matmul(x4, model.attn_q)
    k = matmul(x4, model.attn_k)
    v = matmul(x4, model.attn_v)
    logits = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(cfg.d_k))
    additive = np.where(mask > 0.0, 0.0, -np.inf)
    additive[cold] = 0.0
    attn = softmax_rows(logits + additive[:, None, None, :])
    headed = matmul(attn, v)
    merged = transpose(headed, (0, 2, 1, 3)).reshape(b, l, d1)
    mh = matmul(merged, model.attn_o)
    o = _masked_batch_norm(
        x + mh, model.bn1_gamma, model.bn1_beta, model.bn1_state, mask, mode
    )
    flat = o.reshape(b * l, d1)
    ff = affine(flat, model.ffn1_w, model.ffn1_b, activation="relu")
    ff = affine(ff, model.ffn2_w, model.ffn2_b).reshape(b, l, d1)
    o2 = _masked_batch_norm(
        o + ff, model.bn2_gamma, model.bn2_beta, model.bn2_state, mask, mode
    )
    return o2, cold


def build_sequence_input(
    model: Stage2Model, sample: BehaviorSample, dataset: Dataset
) -> PackedSequence:
    """One sample's packed L_seq x d1 matrix and validity mask."""
    batch = pack_samples(model.config, dataset, [sample])
    x = _sequence_rows(model, batch)
    return PackedSequence(
        x=x.reshape(model.config.l_seq, model.config.d1),
        mask=batch.mask[0].astype(bool),
    )


def transformer_forward(
    model: Stage2Model, packed: PackedSequence, mode: str = "inference"
) -> tuple[np.ndarray, bool]:
    """Contextualize one packed sequence; returns (L_seq x d1 matrix, cold flag)."""
    cfg = model.config
    x = packed.x if isinstance(packed.x, Tensor) else Tensor(packed.x)
    if x.shape != (cfg.l_seq, cfg.d1):
        raise ValueError(
            f"packed matrix shape {x.shape} does not match "
            f"(L_seq={cfg.l_seq}, d1={cfg.d1})"
        )
    mask = np.asarray(packed.mask, dtype=np.float64).reshape(1, cfg.l_seq)
    with no_grad():
        out, cold = _transformer_batch(model, x.reshape(1, cfg.l_seq, cfg.d1), mask, mode)
    return out.data[0].copy(), bool(cold[0])


# -- assembly and head -----------------------------------------------------------


def _assemble_batch(
    model: Stage2Model,
    o_tl: Tensor,
    drug_idx: np.ndarray,
    disease_idx: np.ndarray,
    mask: np.ndarray,
) -> Tensor:
    """Aligned target features concat pooled sequence output, per sample."""
    cfg = model.config
    b = drug_idx.shape[0]
    left_in = concat(
        [Tensor(model.proto_u[drug_idx]), gather_rows(model.embed_u, drug_idx)],
        axis=1,
    )
    right_in = concat(
        [Tensor(model.proto_v[disease_idx]), gather_rows(model.embed_v, disease_idx)],
        axis=1,
    )
    left = affine(left_in, model.align_u_w, model.align_u_b, activation="relu")
    right = affine(right_in, model.align_v_w, model.align_v_b, activation="relu")
    if cfg.pool == "flatten":
        middle = o_tl.reshape(b, cfg.l_seq * cfg.d1)
    else:
        counts = np.maximum(mask.sum(axis=1), 1.0)[:, None]
        middle = (o_tl * mask[..., None]).sum(axis=1) * Tensor(1.0 / counts)
    return concat([left, middle, right], axis=1)


def _head(model: Stage2Model, m: Tensor) -> Tensor:
    out = m
    last = len(model.head_w) - 1
    for i, (w, b) in enumerate(zip(model.head_w, model.head_b)):
        out = affine(out, w, b, activation="none" if i == last else "relu")
    return out


def assemble(
    model: Stage2Model, o_tl, drug: int, disease: int, mask: np.ndarray | None = None
) -> np.ndarray:
    """Public single-sample assembly (flatten layout: drug block first).

    mask matters only in the diagnostic mean-pool mode; when omitted there,
    all rows count.
    """
    cfg = model.config
    o_tl = np.asarray(o_tl.data if isinstance(o_tl, Tensor) else o_tl, dtype=np.float64)
    if o_tl.shape != (cfg.l_seq, cfg.d1):
        raise ValueError(
            f"sequence output shape {o_tl.shape} does not match "
            f"(L_seq={cfg.l_seq}, d1={cfg.d1})"
        )
    if mask is None:
        mask = np.ones(cfg.l_seq)
    mask = np.asarray(mask, dtype=np.float64).reshape(1, cfg.l_seq)
    with no_grad():
        out = _assemble_batch(
            model,
            Tensor(o_tl.reshape(1, *o_tl.shape)),
            np.array([drug], dtype=np.intp),
            np.array([disease], dtype=np.intp),
            mask,
        )
    return out.data[0].copy()


def predict_logit(model: Stage2Model, m) -> tuple[float, float]:
    """Head output for one assembled vector: (logit, sigmoid score)."""
    m = np.asarray(m.data if isinstance(m, Tensor) else m, dtype=np.float64)
    expected = model.config.head_input
    if m.shape != (expected,):
        raise ValueError(
            f"assembled vector extent {m.shape} does not match head input {expected}"
        )
    with no_grad():
        logit = _head(model, Tensor(m.reshape(1, -1))).data[0, 0]
    return float(logit), float(_sigmoid_scalar(logit))


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def forward_logits(model: Stage2Model, batch: PackedBatch, mode: str) -> Tensor:
    """Full differentiable forward over a packed batch; returns logits (B,)."""
    x = _sequence_rows(model, batch)
    mask = batch.mask
    o_tl, _ = _transformer_batch(model, x, mask, mode)
    m = _assemble_batch(model, o_tl, batch.drug, batch.disease, mask)
    return _head(model, m).reshape(len(batch))


def forward_sample(
    model: Stage2Model, sample: BehaviorSample, dataset: Dataset
) -> float:
    """Score one sample in inference mode; strictly inside (0,1)."""
    batch = pack_samples(model.config, dataset, [sample])
    with no_grad():
        logit = forward_logits(model, batch, mode="inference").data[0]
    return _sigmoid_scalar(float(logit))


# -- training and scoring ---------------------------------------------------------


def training_samples(dataset: Dataset, split: CellSplit) -> list[BehaviorSample]:
    """One sample per training cell, in deterministic cell order.

    Each target's sequences come from the remaining training cells; the
    target itself is excluded by the row/column partner restrictions.
    """
    return [
        build_sample(dataset, split, cell, allow_train_target=True)
        for cell in sorted(split.train_cells)
    ]


def train_stage2(
    dataset: Dataset,
    split: CellSplit,
    proto_u: np.ndarray,
    proto_v: np.ndarray,
    config: Stage2Config,
    log=None,
) -> tuple[Stage2Model, list[float]]:
    """Train the scorer on the split's cells; returns (model, epoch losses)."""
    train_labels = [dataset.label(c) for c in split.train_cells]
    if not any(l == 1 for l in train_labels):
        raise SplitError("split has no positive training cells")
    if not any(l == 0 for l in train_labels):
        raise SplitError("split has no negative training cells")
    rng = np.random.default_rng(config.seed)
    model = Stage2Model(config, proto_u, proto_v, rng)
    if model.n_drugs != dataset.n_drugs or model.n_diseases != dataset.n_diseases:
        raise ValueError(
            f"prototype tables ({model.n_drugs}x{model.n_diseases}) do not "
            f"match dataset {dataset.shape_fingerprint()}"
        )
    packed = pack_samples(config, dataset, training_samples(dataset, split))
    n = len(packed)
    steps_per_epoch = max(math.ceil(n / config.batch_size), 1)
    total_steps = max(config.epochs * steps_per_epoch, 1)
    opt = AdamW(
        model.params(),
        lr=config.lr,
        weight_decay=config.weight_decay,
        no_decay=model.no_decay_names(),
    )
    losses: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            batch = packed.take(rows)
            opt.lr = cosine_anneal(min(step, total_steps), total_steps, config.lr, config.lr_min)
            logits = forward_logits(model, batch, mode="train")
            loss = bce_with_logits(logits, batch.label)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {step}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            batch_losses.append(value)
            step += 1
        losses.append(float(np.mean(batch_losses)))
        if log is not None:
            log(
                f"stage2 epoch {epoch + 1}/{config.epochs} "
                f"mean batch loss {losses[-1]:.6f}"
            )
    return model, losses


def score_cells(
    model: Stage2Model,
    dataset: Dataset,
    split: CellSplit,
    cells,
    batch_size: int | None = None,
) -> list[tuple[tuple[int, int], float]]:
    """Score cells in inference mode; sequences use training cells only."""
    cells = list(cells)
    samples = [
        build_sample(dataset, split, cell, allow_train_target=True) for cell in cells
    ]
    packed = pack_samples(model.config, dataset, samples)
    chunk = batch_size or model.config.batch_size
    scores: list[float] = []
    with no_grad():
        for start in range(0, len(packed), chunk):
            rows = np.arange(start, min(start + chunk, len(packed)))
            logits = forward_logits(model, packed.take(rows), mode="inference").data
            scores.extend(_sigmoid_scalar(float(v)) for v in logits)
    return list(zip(cells, scores))


# -- checkpoints ------------------------------------------------------------------


_CONFIG_FIELDS = (
    "d0",
    "d_w",
    "temperature",
    "heads",
    "l_max",
    "lr",
    "lr_min",
    "epochs",
    "batch_size",
    "weight_decay",
    "embed_decay",
    "fusion_activation",
    "pool",
    "seed",
)


def save_model(model: Stage2Model, dirpath: str) -> None:
    arrays = {name: p.data for name, p in model.params().items()}
    arrays["proto_u"] = model.proto_u
    arrays["proto_v"] = model.proto_v
    arrays["bn1_mean"] = model.bn1_state.mean
    arrays["bn1_var"] = model.bn1_state.var
    arrays["bn2_mean"] = model.bn2_state.mean
    arrays["bn2_var"] = model.bn2_state.var
    meta = {"kind": "stage2_model", "fingerprint": f"{model.n_drugs}x{model.n_diseases}"}
    for name in _CONFIG_FIELDS:
        meta[f"config.{name}"] = repr(getattr(model.config, name))
    meta["bn1_batches"] = str(model.bn1_state.batches_seen)
    meta["bn2_batches"] = str(model.bn2_state.batches_seen)
    ckpt.save_params(dirpath, arrays, meta)


def load_model(dirpath: str, dataset: Dataset | None = None) -> Stage2Model:
    """Rebuild a model from its checkpoint; dataset shape must match."""
    params, meta = ckpt.load_params(dirpath)
    if meta.get("kind") != "stage2_model":
        raise ckpt.CheckpointError(f"checkpoint at {dirpath} is not a sequence model")
    kwargs = {}
    for name in _CONFIG_FIELDS:
        key = f"config.{name}"
        if key not in meta:
            raise ckpt.CheckpointError(f"checkpoint is missing {key}")
        kwargs[name] = _parse_config_value(meta[key])
    config = Stage2Config(**kwargs)
    for required in ("proto_u", "proto_v"):
        if required not in params:
            raise ckpt.CheckpointError(f"checkpoint is missing {required!r}")
    if dataset is not None:
        fingerprint = f"{params['proto_u'].shape[0]}x{params['proto_v'].shape[0]}"
        if fingerprint != dataset.shape_fingerprint():
            raise ckpt.CheckpointError(
                f"checkpoint fingerprint {fingerprint} does not match dataset "
                f"{dataset.shape_fingerprint()}"
            )
    model = Stage2Model(
        config, params["proto_u"], params["proto_v"], np.random.default_rng(0)
    )
    for name, tensor in model.params().items():
        if name not in params:
            raise ckpt.CheckpointError(f"checkpoint is missing parameter {name!r}")
        if params[name].shape != tensor.shape:
            raise ckpt.CheckpointError(
                f"parameter {name!r} shape {params[name].shape} does not match "
                f"model shape {tensor.shape}"
            )
        tensor.data = params[name]
    model.bn1_state.mean = params["bn1_mean"]
    model.bn1_state.var = params["bn1_var"]
    model.bn2_state.mean = params["bn2_mean"]
    model.bn2_state.var = params["bn2_var"]
    model.bn1_state.batches_seen = int(meta.get("bn1_batches", "0"))
    model.bn2_state.batches_seen = int(meta.get("bn2_batches", "0"))
    return model


def _parse_config_value(text: str):
    if text in ("True", "False"):
        return text == "True"
    if text.startswith("'") and text.endswith("'"):
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        return float(text)
