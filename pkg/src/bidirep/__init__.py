"""Two-stage drug repositioning over association and similarity matrices.

Stage one learns a compact prototype vector per drug and per disease by
fitting pairwise cosine similarities of encoded feature rows to the given
similarity matrices.  Stage two scores a drug-disease pair by packing both
entities' known interaction partners into one masked sequence, running a
small transformer encoder over it, and reading the pair's probability from
a feed-forward head.  The package also ships the evaluation protocols used
to study the model: repeated cross-validation, cold-start splits, sparsity
stress tests, hyperparameter sweeps, and candidate ranking.
"""

__version__ = "0.1.0"
