"""Synthetic datasets with known structure, used as test oracles.

The block dataset plants a clean cluster signal: drugs and diseases fall
into matched groups and an association exists exactly when the groups
match, so a model that learns the structure can separate held-out cells
perfectly.  The latent-vector similarity generator provides ground-truth
cosine structure for checking that prototype training recovers it.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, default_ids


def block_dataset(
    n_drugs: int = 20,
    n_diseases: int = 15,
    n_blocks: int = 2,
    within_sim: float = 0.9,
    across_sim: float = 0.1,
    sim_noise: float = 0.05,
    seed: int = 0,
) -> Dataset:
    """Matched drug/disease clusters; associations exactly within clusters.

    Similarities are within_sim inside a cluster and across_sim outside,
    plus small symmetric noise, clipped to [0,1] with unit diagonal.
    """
    if n_blocks < 1 or n_blocks > min(n_drugs, n_diseases):
        raise ValueError(f"n_blocks {n_blocks} unusable for {n_drugs}x{n_diseases}")
    rng = np.random.default_rng(seed)
    drug_block = np.array_split(np.arange(n_drugs), n_blocks)
    disease_block = np.array_split(np.arange(n_diseases), n_blocks)
    u_of = np.empty(n_drugs, dtype=int)
    v_of = np.empty(n_diseases, dtype=int)
    for b, members in enumerate(drug_block):
        u_of[members] = b
    for b, members in enumerate(disease_block):
        v_of[members] = b
    A = (u_of[:, None] == v_of[None, :]).astype(np.float64)
    S_U = _block_similarity(u_of, within_sim, across_sim, sim_noise, rng)
    S_V = _block_similarity(v_of, within_sim, across_sim, sim_noise, rng)
    return Dataset(
        A=A,
        S_U=S_U,
        S_V=S_V,
        drug_ids=default_ids("drug", n_drugs),
        disease_ids=default_ids("disease", n_diseases),
    )


def _block_similarity(
    block_of: np.ndarray,
    within: float,
    across: float,
    noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    n = block_of.shape[0]
    S = np.where(block_of[:, None] == block_of[None, :], within, across)
    jitter = rng.uniform(-noise, noise, size=(n, n))
    S = np.clip(S + (jitter + jitter.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(S, 1.0)
    return S


def latent_similarity(
    n: int, dim: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Similarity from random unit vectors: S_ij = max(0, cos angle_ij).

    Returns (S, vectors); the vectors are the ground truth a similarity
    learner should be able to reproduce.
    """
    if n < 2 or dim < 1:
        raise ValueError(f"need n >= 2 and dim >= 1, got n={n}, dim={dim}")
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    S = np.clip(vecs @ vecs.T, 0.0, None)
    np.fill_diagonal(S, 1.0)
    return S, vecs


def random_dataset(
    n_drugs: int = 20,
    n_diseases: int = 15,
    density: float = 0.3,
    seed: int = 0,
) -> Dataset:
    """Unstructured random dataset for property tests (no learnable signal)."""
    rng = np.random.default_rng(seed)
    A = (rng.random((n_drugs, n_diseases)) < density).astype(np.float64)
    S_U = _random_similarity(n_drugs, rng)
    S_V = _random_similarity(n_diseases, rng)
    return Dataset(
        A=A,
        S_U=S_U,
        S_V=S_V,
        drug_ids=default_ids("drug", n_drugs),
        disease_ids=default_ids("disease", n_diseases),
    )


def _random_similarity(n: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.random((n, n))
    S = (raw + raw.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return S
