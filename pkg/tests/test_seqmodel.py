"""Sequence scorer tests: row construction, masking exactness, attention oracle.

The transformer block is checked against an independent numpy
re-implementation written here; masking properties are checked by exact
equality under mutation of padded content.
"""

import dataclasses
import math

import numpy as np
import pytest

from bidirep.autodiff import Tensor
from bidirep.checkpoint import CheckpointError
from bidirep.data import Cell, CellSplit, SplitError, build_sample, cv_split, split_folds
from bidirep.seqmodel import (
    PackedSequence,
    Stage2Config,
    Stage2Model,
    assemble,
    build_sequence_input,
    forward_logits,
    forward_sample,
    fuse,
    load_model,
    pack_samples,
    predict_logit,
    rating_scale,
    save_model,
    score_cells,
    sim_pad,
    train_stage2,
    training_samples,
    transformer_forward,
    _truncate_positions,
)
from bidirep.synth import block_dataset


def tiny_config(**kwargs):
    defaults = dict(
        d0=4, d_w=4, heads=2, l_max=2, epochs=2, batch_size=8, seed=0
    )
    defaults.update(kwargs)
    return Stage2Config(**defaults)


def make_model(config, n_drugs=8, n_diseases=6, seed=3):
    rng = np.random.default_rng(seed)
    proto_u = rng.standard_normal((n_drugs, config.d0))
    proto_v = rng.standard_normal((n_diseases, config.d0))
    return Stage2Model(config, proto_u, proto_v, np.random.default_rng(config.seed))


@pytest.fixture
def dataset():
    return block_dataset(n_drugs=8, n_diseases=6, n_blocks=2, sim_noise=0.02, seed=11)


@pytest.fixture
def split(dataset):
    return cv_split(split_folds(dataset, seed=2, n_folds=3), 0)


@pytest.fixture
def model(dataset):
    return make_model(tiny_config(), dataset.n_drugs, dataset.n_diseases)


# -- configuration shapes ------------------------------------------------------------


def test_config_divisibility():
    cfg = Stage2Config(d0=100, d_w=64, heads=4)
    assert cfg.d1 == 164 and cfg.d_k == 41
    with pytest.raises(ValueError) as err:
        Stage2Config(d0=100, d_w=63, heads=4)
    assert "163" in str(err.value) and "4" in str(err.value)


def test_config_shape_chain():
    cfg = tiny_config()
    assert cfg.d1 == 8
    assert cfg.d_k == 4
    assert cfg.l_seq == 4
    assert cfg.head_input == 8 * (2 + 4)
    assert tiny_config(pool="mean").head_input == 3 * 8


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(temperature=-0.5)
    with pytest.raises(ValueError):
        tiny_config(l_max=0)
    with pytest.raises(ValueError):
        tiny_config(pool="max")
    with pytest.raises(ValueError):
        tiny_config(fusion_activation="tanh")
    with pytest.raises(ValueError):
        tiny_config(heads=0)


def test_model_validates_prototype_tables():
    cfg = tiny_config()
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        Stage2Model(cfg, rng.standard_normal((5, 3)), rng.standard_normal((4, 4)), rng)
    with pytest.raises(ValueError):
        Stage2Model(cfg, rng.standard_normal((5, 4)), rng.standard_normal(4), rng)


# -- row ingredients -----------------------------------------------------------------


def test_sim_pad():
    np.testing.assert_array_equal(sim_pad(0.25, 4), np.full(4, 0.25))
    with pytest.raises(ValueError):
        sim_pad(1.5, 4)
    with pytest.raises(ValueError):
        sim_pad(-0.1, 4)


def test_rating_scale_values():
    row = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rating_scale(row, 0, 2.0), row)
    scaled = rating_scale(row, 1, 2.0)
    np.testing.assert_allclose(scaled, row * 7.38905609893065, rtol=1e-15)
    with pytest.raises(ValueError):
        rating_scale(row, 2, 2.0)


def test_fuse_zero_weights_expose_bias(model):
    cfg = model.config
    model.fuse_u_w.data[:] = 0.0
    model.fuse_u_b.data[:] = np.arange(cfg.d0, dtype=np.float64)  # nonnegative
    out = fuse(model, "drug", np.ones(cfg.d0), sim_pad(0.5, cfg.d0))
    np.testing.assert_array_equal(out, np.arange(cfg.d0, dtype=np.float64))


def test_fuse_identity_passthrough():
    cfg = tiny_config(fusion_activation="none")
    model = make_model(cfg)
    w = np.zeros((2 * cfg.d0, cfg.d0))
    w[: cfg.d0] = np.eye(cfg.d0)
    model.fuse_v_w.data = w
    model.fuse_v_b.data[:] = 0.0
    proto = np.array([0.5, -1.5, 2.0, 0.0])
    out = fuse(model, "disease", proto, sim_pad(0.9, cfg.d0))
    np.testing.assert_array_equal(out, proto)


def test_fuse_validation(model):
    with pytest.raises(ValueError):
        fuse(model, "gene", np.ones(4), np.ones(4))
    with pytest.raises(ValueError):
        fuse(model, "drug", np.ones(5), np.ones(4))


# -- truncation ---------------------------------------------------------------------


def test_truncation_keeps_top_similarity():
    seq = [(5, 1), (2, 0), (9, 1)]
    sims = np.array([0.3, 0.9, 0.8])
    assert _truncate_positions(seq, sims, 2) == [1, 2]
    assert _truncate_positions(seq, sims, 3) == [0, 1, 2]
    assert _truncate_positions(seq, sims, 5) == [0, 1, 2]


def test_truncation_tie_breaks_by_entity_index():
    seq = [(9, 1), (2, 0)]
    sims = np.array([0.9, 0.9])
    assert _truncate_positions(seq, sims, 1) == [1]  # entity 2 beats entity 9


def test_truncation_preserves_appearance_order():
    # kept elements stay in original sequence order, not similarity order
    seq = [(3, 1), (1, 0), (7, 1)]
    sims = np.array([0.5, 0.9, 0.7])
    assert _truncate_positions(seq, sims, 2) == [1, 2]


def test_padding_layout(dataset, model):
    # one drug-side neighbour, no disease-side: mask [1,0 | 0,0]
    sample = build_sample(
        dataset,
        CellSplit(train_cells={Cell(0, 1)}, test_cells={Cell(0, 0)}),
        Cell(0, 0),
    )
    packed = build_sequence_input(model, sample, dataset)
    np.testing.assert_array_equal(packed.mask, [True, False, False, False])
    assert packed.x.shape == (4, 8)
    np.testing.assert_array_equal(packed.x.data[1:], np.zeros((3, 8)))


def test_sequence_row_matches_public_pieces(dataset, model):
    # dual route: the batched row builder vs fuse/rating_scale on one row
    cfg = model.config
    sample = build_sample(
        dataset,
        CellSplit(train_cells={Cell(0, 1), Cell(2, 0)}, test_cells={Cell(0, 0)}),
        Cell(0, 0),
    )
    packed = build_sequence_input(model, sample, dataset)
    j, lab = sample.drug_seq[0]
    s = dataset.S_V[sample.disease, j]
    fused = fuse(model, "drug", model.proto_v[j], sim_pad(s, cfg.d0))
    expected = rating_scale(
        np.concatenate([fused, model.embed_v.data[j]]), lab, cfg.temperature
    )
    np.testing.assert_allclose(packed.x.data[0], expected, rtol=1e-12)
    i, lab_i = sample.disease_seq[0]
    s_i = dataset.S_U[sample.drug, i]
    fused_i = fuse(model, "disease", model.proto_u[i], sim_pad(s_i, cfg.d0))
    expected_i = rating_scale(
        np.concatenate([fused_i, model.embed_u.data[i]]), lab_i, cfg.temperature
    )
    np.testing.assert_allclose(packed.x.data[cfg.l_max], expected_i, rtol=1e-12)


# -- transformer block ----------------------------------------------------------------


def reference_transformer(model, x, mask):
    """Independent numpy re-implementation (inference mode, B=1)."""
    cfg = model.config
    if mask.sum() == 0:
        return np.zeros_like(x)
    additive = np.where(mask > 0, 0.0, -np.inf)
    heads = []
    for h in range(cfg.heads):
        q = x @ model.attn_q.data[h]
        k = x @ model.attn_k.data[h]
        v = x @ model.attn_v.data[h]
        logits = q @ k.T / math.sqrt(cfg.d_k) + additive[None, :]
        shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
        weights = shifted / shifted.sum(axis=-1, keepdims=True)
        heads.append(weights @ v)
    mh = np.concatenate(heads, axis=1) @ model.attn_o.data

    def bn(v, gamma, beta, state):
        return (v - state.mean) / np.sqrt(state.var + state.eps) * gamma + beta

    o = bn(x + mh, model.bn1_gamma.data, model.bn1_beta.data, model.bn1_state)
    o = o * mask[:, None]
    ff = np.maximum(o @ model.ffn1_w.data + model.ffn1_b.data, 0.0)
    ff = ff @ model.ffn2_w.data + model.ffn2_b.data
    o2 = bn(o + ff, model.bn2_gamma.data, model.bn2_beta.data, model.bn2_state)
    return o2 * mask[:, None]


def test_transformer_matches_reference(dataset, split, model):
    rng = np.random.default_rng(8)
    model.bn1_gamma.data = rng.uniform(0.5, 1.5, model.config.d1)
    model.bn1_beta.data = rng.uniform(-0.3, 0.3, model.config.d1)
    model.bn1_state.mean = rng.uniform(-0.2, 0.2, model.config.d1)
    model.bn1_state.var = rng.uniform(0.5, 2.0, model.config.d1)
    for target in sorted(split.test_cells)[:4]:
        sample = build_sample(dataset, split, target)
        packed = build_sequence_input(model, sample, dataset)
        got, cold = transformer_forward(model, packed)
        mask = packed.mask.astype(np.float64)
        want = reference_transformer(model, packed.x.data, mask)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)
        assert cold == (packed.mask.sum() == 0)


def test_uniform_attention_when_queries_are_blind(dataset, model):
    # zero Q/K make attention uniform over valid keys; V and O pass rows
    # through, so each row's attention output is the mean of valid rows
    cfg = model.config
    model.attn_q.data[:] = 0.0
    model.attn_k.data[:] = 0.0
    eye = np.eye(cfg.d1)
    for h in range(cfg.heads):
        model.attn_v.data[h] = eye[:, h * cfg.d_k : (h + 1) * cfg.d_k]
    model.attn_o.data = eye
    model.ffn1_w.data[:] = 0.0
    model.ffn1_b.data[:] = 0.0
    model.ffn2_w.data[:] = 0.0
    model.ffn2_b.data[:] = 0.0
    sample = build_sample(
        dataset,
        CellSplit(train_cells={Cell(0, 1), Cell(0, 2), Cell(2, 0)}, test_cells={Cell(0, 0)}),
        Cell(0, 0),
    )
    packed = build_sequence_input(model, sample, dataset)
    mask = packed.mask.astype(np.float64)
    x = packed.x.data
    got, _ = transformer_forward(model, packed)
    mean_row = x[packed.mask].mean(axis=0)
    scale = 1.0 / np.sqrt(1.0 + 1e-5)  # fresh BN running stats twice
    want = (x + mean_row[None, :]) * scale * scale * mask[:, None]
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


def test_masked_rows_cannot_influence_output(dataset, split, model):
    target = sorted(split.test_cells)[0]
    sample = build_sample(dataset, split, target)
    packed = build_sequence_input(model, sample, dataset)
    baseline, _ = transformer_forward(model, packed)
    mutated = packed.x.data.copy()
    mutated[~packed.mask] = 1e6  # finite garbage in every padded row
    poked = PackedSequence(x=Tensor(mutated), mask=packed.mask.copy())
    out, _ = transformer_forward(model, poked)
    assert np.array_equal(out, baseline)


def test_masked_rows_cannot_influence_training_logits(dataset, split, model):
    samples = [build_sample(dataset, split, c) for c in sorted(split.test_cells)[:4]]
    packed = pack_samples(model.config, dataset, samples)
    logits_a = forward_logits(model, packed, mode="train").data.copy()
    # mutating padded slots of the index arrays must change nothing: the
    # builder zeroes those rows via the validity mask
    packed.j_sim[packed.j_valid == 0] = 0.77
    packed.i_sim[packed.i_valid == 0] = 0.33
    packed.j_lab[packed.j_valid == 0] = 1.0
    logits_b = forward_logits(model, packed, mode="train").data
    assert np.array_equal(logits_a, logits_b)


def test_cold_sample_contextualizes_to_zeros(dataset, model):
    sample = build_sample(
        dataset,
        CellSplit(train_cells={Cell(5, 5)}, test_cells={Cell(0, 0)}),
        Cell(0, 0),
    )
    assert sample.drug_seq == [] and sample.disease_seq == []
    packed = build_sequence_input(model, sample, dataset)
    out, cold = transformer_forward(model, packed)
    assert cold
    np.testing.assert_array_equal(out, np.zeros_like(out))
    score = forward_sample(model, sample, dataset)
    assert 0.0 < score < 1.0


def test_mixed_cold_warm_batch_matches_single(dataset, split, model):
    cold_sample = build_sample(
        dataset,
        CellSplit(train_cells={Cell(5, 5)}, test_cells={Cell(0, 0)}),
        Cell(0, 0),
    )
    warm_sample = build_sample(dataset, split, sorted(split.test_cells)[0])
    batch = pack_samples(model.config, dataset, [cold_sample, warm_sample])
    logits = forward_logits(model, batch, mode="inference").data
    single_cold = pack_samples(model.config, dataset, [cold_sample])
    single_warm = pack_samples(model.config, dataset, [warm_sample])
    lc = forward_logits(model, single_cold, mode="inference").data[0]
    lw = forward_logits(model, single_warm, mode="inference").data[0]
    np.testing.assert_allclose(logits, [lc, lw], rtol=1e-12)


def test_temperature_zero_ignores_neighbour_labels(dataset, split, model):
    cfg = tiny_config(temperature=0.0)
    model0 = make_model(cfg, dataset.n_drugs, dataset.n_diseases)
    samples = [build_sample(dataset, split, c) for c in sorted(split.test_cells)[:3]]
    packed = pack_samples(cfg, dataset, samples)
    base = forward_logits(model0, packed, mode="inference").data.copy()
    packed.j_lab = 1.0 - packed.j_lab
    packed.i_lab = 1.0 - packed.i_lab
    flipped = forward_logits(model0, packed, mode="inference").data
    assert np.array_equal(base, flipped)


def test_temperature_two_scales_positive_rows(dataset, split, model):
    # with the default temperature the same label flip must change scores
    samples = [build_sample(dataset, split, c) for c in sorted(split.test_cells)[:3]]
    packed = pack_samples(model.config, dataset, samples)
    base = forward_logits(model, packed, mode="inference").data.copy()
    valid_labels = packed.j_lab[packed.j_valid > 0]
    assert valid_labels.size > 0
    packed.j_lab = packed.j_valid - packed.j_lab  # flip only valid slots
    flipped = forward_logits(model, packed, mode="inference").data
    assert not np.array_equal(base, flipped)


def test_target_label_plays_no_part_in_scoring(dataset, split, model):
    sample = build_sample(dataset, split, sorted(split.test_cells)[0])
    flipped = dataclasses.replace(sample, label=1 - sample.label)
    assert forward_sample(model, sample, dataset) == forward_sample(
        model, flipped, dataset
    )


def test_mean_pool_is_permutation_invariant(dataset, split):
    cfg = tiny_config(pool="mean")
    model_mean = make_model(cfg, dataset.n_drugs, dataset.n_diseases)
    target = next(
        c
        for c in sorted(split.test_cells)
        if len(build_sample(dataset, split, c).drug_seq) >= 2
    )
    sample = build_sample(dataset, split, target)
    base = pack_samples(cfg, dataset, [sample])
    permuted = pack_samples(cfg, dataset, [sample])
    for field in ("j_idx", "j_sim", "j_lab"):
        arr = getattr(permuted, field)
        arr[0, [0, 1]] = arr[0, [1, 0]]
    assert base.j_valid[0, 1] == 1.0  # both swapped slots are real
    score_base = forward_logits(model_mean, base, mode="inference").data[0]
    score_perm = forward_logits(model_mean, permuted, mode="inference").data[0]
    assert score_base == pytest.approx(score_perm, rel=1e-10)

    cfg_flat = tiny_config(pool="flatten")
    model_flat = make_model(cfg_flat, dataset.n_drugs, dataset.n_diseases)
    flat_base = forward_logits(model_flat, base, mode="inference").data[0]
    flat_perm = forward_logits(model_flat, permuted, mode="inference").data[0]
    assert flat_base != flat_perm  # flatten keeps positional identity


# -- assembly and head ---------------------------------------------------------------


def test_assemble_layout_and_validation(dataset, split, model):
    cfg = model.config
    sample = build_sample(dataset, split, sorted(split.test_cells)[0])
    packed = build_sequence_input(model, sample, dataset)
    o_tl, _ = transformer_forward(model, packed)
    m = assemble(model, o_tl, sample.drug, sample.disease, packed.mask)
    assert m.shape == (cfg.head_input,)
    # middle block is the flattened sequence output
    middle = m[cfg.d1 : cfg.d1 + cfg.l_seq * cfg.d1]
    np.testing.assert_array_equal(middle, o_tl.reshape(-1))
    with pytest.raises(ValueError):
        assemble(model, o_tl[:1], sample.drug, sample.disease)


def test_predict_logit_bias_shift(dataset, split, model):
    sample = build_sample(dataset, split, sorted(split.test_cells)[0])
    packed = build_sequence_input(model, sample, dataset)
    o_tl, _ = transformer_forward(model, packed)
    m = assemble(model, o_tl, sample.drug, sample.disease, packed.mask)
    logit_a, score_a = predict_logit(model, m)
    model.head_b[-1].data[0] += 1.0
    logit_b, score_b = predict_logit(model, m)
    assert logit_b == pytest.approx(logit_a + 1.0, rel=1e-12)
    assert score_b > score_a
    with pytest.raises(ValueError):
        predict_logit(model, m[:-1])


def test_zero_head_scores_half(dataset, split, model):
    for w, b in zip(model.head_w, model.head_b):
        w.data[:] = 0.0
        b.data[:] = 0.0
    sample = build_sample(dataset, split, sorted(split.test_cells)[0])
    assert forward_sample(model, sample, dataset) == 0.5


# -- full-model gradients ---------------------------------------------------------------


def test_full_forward_gradients_match_finite_differences(dataset, split):
    cfg = tiny_config()
    model = make_model(cfg, dataset.n_drugs, dataset.n_diseases)
    warm = [
        c
        for c in sorted(split.test_cells)
        if build_sample(dataset, split, c).drug_seq
        and build_sample(dataset, split, c).disease_seq
    ][:3]
    samples = [build_sample(dataset, split, c) for c in warm]
    packed = pack_samples(cfg, dataset, samples)
    labels = packed.label
    from bidirep.autodiff import bce_with_logits

    def build_loss():
        return bce_with_logits(forward_logits(model, packed, mode="train"), labels)

    params = model.params()
    for p in params.values():
        p.zero_grad()
    build_loss().backward()
    rng = np.random.default_rng(77)
    worst = 0.0
    h = 1e-5
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grads = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        coords = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(build_loss().data)
            flat[c] = orig - h
            down = float(build_loss().data)
            flat[c] = orig
            numeric = (up - down) / (2 * h)
            scale = max(abs(numeric), abs(grads[c]), 1e-6)
            worst = max(worst, abs(numeric - grads[c]) / scale)
    assert worst < 1e-4


# -- batch vs single --------------------------------------------------------------------


def test_batch_scoring_matches_single(dataset, split, model):
    cells = sorted(split.test_cells)
    batch_scores = dict(score_cells(model, dataset, split, cells))
    for cell in cells:
        sample = build_sample(dataset, split, cell, allow_train_target=True)
        single = forward_sample(model, sample, dataset)
        assert batch_scores[cell] == pytest.approx(single, rel=1e-12)


def test_score_cells_chunking_is_invisible(dataset, split, model):
    cells = sorted(split.test_cells)[:7]
    one_shot = score_cells(model, dataset, split, cells, batch_size=100)
    chunked = score_cells(model, dataset, split, cells, batch_size=3)
    for (ca, sa), (cb, sb) in zip(one_shot, chunked):
        assert ca == cb and sa == pytest.approx(sb, rel=1e-12)


# -- training -----------------------------------------------------------------------


def test_training_samples_cover_train_cells(dataset, split):
    samples = training_samples(dataset, split)
    assert len(samples) == len(split.train_cells)
    assert [Cell(s.drug, s.disease) for s in samples] == sorted(split.train_cells)
    for s in samples:
        assert s.label == dataset.label(Cell(s.drug, s.disease))


def test_train_stage2_reduces_loss(dataset, split):
    cfg = tiny_config(epochs=4, lr=3e-3)
    rng = np.random.default_rng(1)
    proto_u = rng.standard_normal((dataset.n_drugs, cfg.d0))
    proto_v = rng.standard_normal((dataset.n_diseases, cfg.d0))
    model, losses = train_stage2(dataset, split, proto_u, proto_v, cfg)
    assert len(losses) == 4
    assert losses[0] > losses[-1]
    assert model.bn1_state.batches_seen > 0


def test_train_stage2_deterministic(dataset, split):
    cfg = tiny_config(epochs=2)
    rng = np.random.default_rng(1)
    proto_u = rng.standard_normal((dataset.n_drugs, cfg.d0))
    proto_v = rng.standard_normal((dataset.n_diseases, cfg.d0))
    _, losses_a = train_stage2(dataset, split, proto_u, proto_v, cfg)
    _, losses_b = train_stage2(dataset, split, proto_u, proto_v, cfg)
    assert losses_a == losses_b


def test_train_stage2_requires_both_classes(dataset):
    cfg = tiny_config()
    rng = np.random.default_rng(1)
    proto_u = rng.standard_normal((dataset.n_drugs, cfg.d0))
    proto_v = rng.standard_normal((dataset.n_diseases, cfg.d0))
    pos_only = CellSplit(
        train_cells=set(dataset.positive_cells()), test_cells=set()
    )
    with pytest.raises(SplitError):
        train_stage2(dataset, pos_only, proto_u, proto_v, cfg)
    neg_only = CellSplit(
        train_cells=set(dataset.zero_cells()), test_cells=set()
    )
    with pytest.raises(SplitError):
        train_stage2(dataset, neg_only, proto_u, proto_v, cfg)


def test_train_stage2_rejects_mismatched_tables(dataset, split):
    cfg = tiny_config()
    rng = np.random.default_rng(1)
    proto_u = rng.standard_normal((dataset.n_drugs + 1, cfg.d0))
    proto_v = rng.standard_normal((dataset.n_diseases, cfg.d0))
    with pytest.raises(ValueError):
        train_stage2(dataset, split, proto_u, proto_v, cfg)


# -- checkpoints --------------------------------------------------------------------


def test_model_checkpoint_round_trip(tmp_path, dataset, split):
    cfg = tiny_config(epochs=1)
    rng = np.random.default_rng(1)
    proto_u = rng.standard_normal((dataset.n_drugs, cfg.d0))
    proto_v = rng.standard_normal((dataset.n_diseases, cfg.d0))
    model, _ = train_stage2(dataset, split, proto_u, proto_v, cfg)
    save_model(model, str(tmp_path / "model"))
    loaded = load_model(str(tmp_path / "model"), dataset)
    assert loaded.config == model.config
    cells = sorted(split.test_cells)[:5]
    a = score_cells(model, dataset, split, cells)
    b = score_cells(loaded, dataset, split, cells)
    assert a == b  # bit-identical scores after the round trip
    assert loaded.bn1_state.batches_seen == model.bn1_state.batches_seen


def test_model_checkpoint_fingerprint_mismatch(tmp_path, dataset, split, model):
    save_model(model, str(tmp_path / "model"))
    other = block_dataset(n_drugs=5, n_diseases=4, seed=0)
    with pytest.raises(CheckpointError) as err:
        load_model(str(tmp_path / "model"), other)
    assert "fingerprint" in str(err.value)
    loaded = load_model(str(tmp_path / "model"))  # no dataset, no check
    assert loaded.n_drugs == model.n_drugs


def test_model_checkpoint_rejects_wrong_kind(tmp_path):
    from bidirep.checkpoint import save_params

    save_params(str(tmp_path / "c"), {"w": np.ones(2)}, {"kind": "prototype_encoder"})
    with pytest.raises(CheckpointError):
        load_model(str(tmp_path / "c"))


# -- golden regression ------------------------------------------------------------------


GOLDEN_SCORE = 0.14093456138226132  # frozen after the first trusted run


def test_golden_score_frozen():
    A = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    S = np.array([[1.0, 0.2, 0.6], [0.2, 1.0, 0.4], [0.6, 0.4, 1.0]])
    from bidirep.data import Dataset, default_ids

    ds = Dataset(
        A=A,
        S_U=S,
        S_V=S,
        drug_ids=default_ids("drug", 3),
        disease_ids=default_ids("disease", 3),
    )
    cfg = tiny_config(seed=5)
    rng = np.random.default_rng(99)
    model = Stage2Model(
        cfg,
        rng.standard_normal((3, cfg.d0)),
        rng.standard_normal((3, cfg.d0)),
        np.random.default_rng(cfg.seed),
    )
    split = CellSplit(
        train_cells={Cell(0, 2), Cell(1, 1), Cell(2, 0), Cell(2, 1)},
        test_cells={Cell(0, 0)},
    )
    sample = build_sample(ds, split, Cell(0, 0))
    score = forward_sample(model, sample, ds)
    assert score == GOLDEN_SCORE
