"""Dataset ingestion, validation, behavior sequences, and cell splits.

A dataset is a binary drug-disease association matrix plus a drug-drug and
a disease-disease similarity matrix (entries in [0,1], symmetric) and ID
sidecars.  Everything downstream works on cells (drug index, disease
index): splits are sets of cells, and each prediction target turns into a
pair of behavior sequences listing the training-set cells that share its
row (drug side) or column (disease side).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SYMMETRY_TOL = 1e-9


class LoadError(ValueError):
    """A dataset or split file failed to parse or validate."""


class SplitError(ValueError):
    """A requested split cannot be constructed from this dataset."""


class Cell(NamedTuple):
    """One association-matrix position."""

    drug: int
    disease: int


@dataclass
class Dataset:
    """Validated association + similarity matrices with entity IDs."""

    A: np.ndarray
    S_U: np.ndarray
    S_V: np.ndarray
    drug_ids: list[str]
    disease_ids: list[str]

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.S_U = np.asarray(self.S_U, dtype=np.float64)
        self.S_V = np.asarray(self.S_V, dtype=np.float64)
        _validate_dataset(self)

    @property
    def n_drugs(self) -> int:
        return self.A.shape[0]

    @property
    def n_diseases(self) -> int:
        return self.A.shape[1]

    def positive_cells(self) -> list[Cell]:
        return [Cell(int(i), int(j)) for i, j in np.argwhere(self.A == 1.0)]

    def zero_cells(self) -> list[Cell]:
        return [Cell(int(i), int(j)) for i, j in np.argwhere(self.A == 0.0)]

    def label(self, cell: Cell) -> int:
        return int(self.A[cell.drug, cell.disease])

    def shape_fingerprint(self) -> str:
        return f"{self.n_drugs}x{self.n_diseases}"

    def summary(self) -> str:
        positives = int(self.A.sum())
        sparsity = positives / self.A.size
        return (
            f"{self.n_drugs} drugs x {self.n_diseases} diseases, "
            f"{positives} positive associations, sparsity {sparsity:.4f}"
        )


def _validate_dataset(ds: Dataset) -> None:
    if ds.A.ndim != 2:
        raise LoadError(f"association matrix must be 2-D, got shape {ds.A.shape}")
    n_u, n_v = ds.A.shape
    bad = np.argwhere((ds.A != 0.0) & (ds.A != 1.0))
    if bad.size:
        i, j = bad[0]
        raise LoadError(
            f"association entry A[{i},{j}] = {ds.A[i, j]} is not 0 or 1"
        )
    for name, S, n in (("drug", ds.S_U, n_u), ("disease", ds.S_V, n_v)):
        if S.shape != (n, n):
            raise LoadError(
                f"{name} similarity shape {S.shape} does not match {n} entities"
            )
        out = np.argwhere((S < 0.0) | (S > 1.0))
        if out.size:
            i, j = out[0]
            raise LoadError(
                f"{name} similarity [{i},{j}] = {S[i, j]} outside [0,1]"
            )
        gap = np.abs(S - S.T)
        if gap.max(initial=0.0) > SYMMETRY_TOL:
            i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
            raise LoadError(
                f"{name} similarity asymmetric at [{i},{j}]: "
                f"{S[i, j]} vs {S[j, i]}"
            )
    if len(ds.drug_ids) != n_u:
        raise LoadError(
            f"{len(ds.drug_ids)} drug IDs for {n_u} association rows"
        )
    if len(ds.disease_ids) != n_v:
        raise LoadError(
            f"{len(ds.disease_ids)} disease IDs for {n_v} association columns"
        )
    if ds.A.sum() == 0:
        warnings.warn("association matrix has no positive entries", stacklevel=3)


def _read_matrix(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                bad = next(p for p in parts if not _is_float(p))
                raise LoadError(
                    f"{path}:{lineno}: non-numeric entry {bad!r}"
                ) from None
    if not rows:
        raise LoadError(f"{path}: no matrix rows found")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise LoadError(
                f"{path}: row {r} has {len(row)} entries, expected {width}"
            )
    return np.array(rows, dtype=np.float64)


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _read_ids(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    if not ids:
        raise LoadError(f"{path}: no IDs found")
    return ids


def load_dataset(
    association_path: str,
    drug_sim_path: str,
    disease_sim_path: str,
    drug_ids_path: str | None = None,
    disease_ids_path: str | None = None,
) -> Dataset:
    """Read matrices (whitespace- or comma-separated text) and validate."""
    A = _read_matrix(association_path)
    S_U = _read_matrix(drug_sim_path)
    S_V = _read_matrix(disease_sim_path)
    n_u, n_v = A.shape
    drug_ids = _read_ids(drug_ids_path) if drug_ids_path else default_ids("drug", n_u)
    disease_ids = (
        _read_ids(disease_ids_path) if disease_ids_path else default_ids("disease", n_v)
    )
    return Dataset(A=A, S_U=S_U, S_V=S_V, drug_ids=drug_ids, disease_ids=disease_ids)


def default_ids(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(n)]


def save_dataset(dataset: Dataset, dirpath: str) -> dict[str, str]:
    """Write the four text files of a dataset; returns the path map."""
    os.makedirs(dirpath, exist_ok=True)
    paths = {
        "association": os.path.join(dirpath, "association.txt"),
        "drug_sim": os.path.join(dirpath, "drug_sim.txt"),
        "disease_sim": os.path.join(dirpath, "disease_sim.txt"),
        "drug_ids": os.path.join(dirpath, "drug_ids.txt"),
        "disease_ids": os.path.join(dirpath, "disease_ids.txt"),
    }
    np.savetxt(paths["association"], dataset.A, fmt="%.17g")
    np.savetxt(paths["drug_sim"], dataset.S_U, fmt="%.17g")
    np.savetxt(paths["disease_sim"], dataset.S_V, fmt="%.17g")
    with open(paths["drug_ids"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(dataset.drug_ids) + "\n")
    with open(paths["disease_ids"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(dataset.disease_ids) + "\n")
    return paths


# -- splits --------------------------------------------------------------------


@dataclass
class CellSplit:
    """Disjoint train/test cell sets over one dataset."""

    train_cells: set[Cell]
    test_cells: set[Cell]
    _by_drug: dict[int, list[Cell]] | None = field(
        default=None, init=False, repr=False, compare=False
    )
    _by_disease: dict[int, list[Cell]] | None = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        overlap = self.train_cells & self.test_cells
        if overlap:
            raise SplitError(
                f"train and test overlap in {len(overlap)} cells, e.g. {next(iter(overlap))}"
            )

    def train_index(self) -> tuple[dict[int, list[Cell]], dict[int, list[Cell]]]:
        """Training cells grouped by drug row and by disease column,
        each group sorted by ascending partner index (cached)."""
        if self._by_drug is None:
            by_drug: dict[int, list[Cell]] = {}
            by_disease: dict[int, list[Cell]] = {}
            for cell in sorted(self.train_cells):
                by_drug.setdefault(cell.drug, []).append(cell)
                by_disease.setdefault(cell.disease, []).append(cell)
            self._by_drug = by_drug
            self._by_disease = by_disease
        return self._by_drug, self._by_disease


@dataclass
class FoldPlan:
    """Equal-count positive and negative cell folds for cross-validation."""

    pos_folds: list[list[Cell]]
    neg_folds: list[list[Cell]]
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.pos_folds)


@dataclass
class BehaviorSample:
    """One prediction target with its two training-set behavior sequences.

    drug_seq lists (disease index, label) over the target drug's other
    training cells; disease_seq lists (drug index, label) over the target
    disease's other training cells.  Both come out sorted by ascending
    partner index.
    """

    drug: int
    disease: int
    drug_seq: list[tuple[int, int]]
    disease_seq: list[tuple[int, int]]
    label: int


def split_folds(dataset: Dataset, seed: int, n_folds: int = 10) -> FoldPlan:
    """Partition positives into folds and pair each with fresh negatives.

    Positive folds partition all positive cells (sizes differ by at most
    one); negative folds are disjoint draws from the zero cells with
    |neg fold i| = |pos fold i|.  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    pos = dataset.positive_cells()
    if len(pos) < n_folds:
        raise SplitError(
            f"{len(pos)} positive cells cannot fill {n_folds} folds"
        )
    zeros = dataset.zero_cells()
    if len(zeros) < len(pos):
        raise SplitError(
            f"need {len(pos)} negative cells but only {len(zeros)} zero cells exist"
        )
    pos_order = rng.permutation(len(pos))
    neg_order = rng.choice(len(zeros), size=len(pos), replace=False)
    pos_folds = [
        [pos[i] for i in chunk] for chunk in np.array_split(pos_order, n_folds)
    ]
    neg_folds = [
        [zeros[i] for i in chunk] for chunk in np.array_split(neg_order, n_folds)
    ]
    return FoldPlan(pos_folds=pos_folds, neg_folds=neg_folds, seed=seed)


def cv_split(plan: FoldPlan, test_fold: int) -> CellSplit:
    """Hold out one fold's positive and negative cells; train on the rest."""
    if not 0 <= test_fold < plan.n_folds:
        raise IndexError(
            f"test_fold {test_fold} outside 0..{plan.n_folds - 1}"
        )
    train: set[Cell] = set()
    test: set[Cell] = set()
    for f in range(plan.n_folds):
        target = test if f == test_fold else train
        target.update(plan.pos_folds[f])
        target.update(plan.neg_folds[f])
    return CellSplit(train_cells=train, test_cells=test)


def build_sample(
    dataset: Dataset,
    split: CellSplit,
    target: Cell,
    allow_train_target: bool = False,
) -> BehaviorSample:
    """Assemble the target cell's bidirectional behavior sequences.

    The row and column neighbours are drawn from train_cells only, and the
    target's own row/column position is excluded, so the target never
    leaks into either sequence.  Empty sequences are legal (cold start).
    Scoring an evaluation cell that is itself a training cell is rejected
    unless allow_train_target is set (training targets and candidate
    ranking legitimately score train cells; the exclusion above still
    keeps the target out of its own sequences).
    """
    if target in split.train_cells and not allow_train_target:
        raise ValueError(f"target cell {tuple(target)} is in the training set")
    k, m = target
    by_drug, by_disease = split.train_index()
    drug_seq = [
        (c.disease, dataset.label(c)) for c in by_drug.get(k, ()) if c.disease != m
    ]
    disease_seq = [
        (c.drug, dataset.label(c)) for c in by_disease.get(m, ()) if c.drug != k
    ]
    return BehaviorSample(
        drug=k,
        disease=m,
        drug_seq=drug_seq,
        disease_seq=disease_seq,
        label=dataset.label(target),
    )


def coldstart_split(dataset: Dataset, drug: int, seed: int) -> CellSplit | None:
    """Mask a whole drug row as test; train elsewhere with sampled negatives.

    Returns None (a skip signal, not an error) when the drug has no
    positive association to hold out.
    """
    if not 0 <= drug < dataset.n_drugs:
        raise IndexError(f"drug index {drug} outside 0..{dataset.n_drugs - 1}")
    row = dataset.A[drug]
    if row.sum() == 0:
        return None
    test = {Cell(drug, m) for m in range(dataset.n_diseases)}
    train_pos = [c for c in dataset.positive_cells() if c.drug != drug]
    if not train_pos:
        raise SplitError(
            f"masking drug {drug} leaves no positive training cells"
        )
    zeros = [c for c in dataset.zero_cells() if c.drug != drug]
    if len(zeros) < len(train_pos):
        raise SplitError(
            f"need {len(train_pos)} negatives outside row {drug}, "
            f"only {len(zeros)} zero cells available"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(zeros), size=len(train_pos), replace=False)
    train = set(train_pos) | {zeros[i] for i in chosen}
    return CellSplit(train_cells=train, test_cells=test)


def sparsify(
    dataset: Dataset, split: CellSplit, lam: float, seed: int
) -> CellSplit:
    """Keep ceil(lam * train positives) positives; negatives and test stay.

    lam must lie in (0,1]; lam=1 reproduces the split unchanged.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"retained fraction must be in (0,1], got {lam}")
    train_pos = sorted(c for c in split.train_cells if dataset.label(c) == 1)
    train_neg = {c for c in split.train_cells if dataset.label(c) == 0}
    if not train_pos:
        raise SplitError("split has no positive training cells to sparsify")
    keep = math.ceil(lam * len(train_pos))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(train_pos), size=keep, replace=False)
    retained = {train_pos[i] for i in chosen}
    return CellSplit(train_cells=retained | train_neg, test_cells=set(split.test_cells))


# -- split manifests -----------------------------------------------------------


def save_split(
    split: CellSplit,
    path: str,
    protocol: str,
    seed: int,
    fold: int | None = None,
) -> None:
    """Write a split as replayable text: header lines then one cell per line."""
    lines = [f"protocol={protocol}", f"seed={seed}"]
    if fold is not None:
        lines.append(f"fold={fold}")
    for cell in sorted(split.train_cells):
        lines.append(f"train {cell.drug} {cell.disease}")
    for cell in sorted(split.test_cells):
        lines.append(f"test {cell.drug} {cell.disease}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_split(
    path: str, dataset: Dataset | None = None
) -> tuple[CellSplit, dict[str, str]]:
    """Read a split manifest back; bounds-checked when a dataset is given."""
    meta: dict[str, str] = {}
    train: set[Cell] = set()
    test: set[Cell] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if "=" in text and not text.startswith(("train ", "test ")):
                key, value = text.split("=", 1)
                meta[key] = value
                continue
            parts = text.split()
            if len(parts) != 3 or parts[0] not in ("train", "test"):
                raise LoadError(f"{path}:{lineno}: unrecognized line {text!r}")
            try:
                cell = Cell(int(parts[1]), int(parts[2]))
            except ValueError:
                raise LoadError(
                    f"{path}:{lineno}: non-integer cell in {text!r}"
                ) from None
            (train if parts[0] == "train" else test).add(cell)
    if dataset is not None:
        for cell in train | test:
            if not (
                0 <= cell.drug < dataset.n_drugs
                and 0 <= cell.disease < dataset.n_diseases
            ):
                raise LoadError(
                    f"{path}: cell {tuple(cell)} outside dataset "
                    f"{dataset.shape_fingerprint()}"
                )
    return CellSplit(train_cells=train, test_cells=test), meta
