"""Protocol runners: cross-validation, cold start, sparsity, sweeps, ranking.

Every runner is a pure function of (dataset, configs, seed): all internal
randomness comes from seeds derived with derive_seed, units are evaluated
and merged in a fixed order even when running on multiple processes, and
the serialized report payload is byte-identical across reruns.  Wall-clock
time lives on the report object but is excluded from the payload.

Prototype encoders depend only on the similarity matrices, which no
protocol modifies, so Stage I trains once per dataset (per prototype
extent) and its tables are shared across folds, drugs, and grid points.
"""

from __future__ import annotations

import hashlib
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    Cell,
    CellSplit,
    Dataset,
    coldstart_split,
    cv_split,
    sparsify,
    split_folds,
)
from .metrics import MetricError, auprc, auroc, pr_points, roc_points
from .proto import Stage1Config, prototype_table, train_stage1
from .seqmodel import Stage2Config, Stage2Model, score_cells, train_stage2


def derive_seed(base: int, *parts) -> int:
    """Stable sub-seed from a base seed and a label path (hash-based)."""
    text = repr((int(base),) + tuple(parts))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class UnitResult:
    """One evaluation unit (a fold, a drug, a lambda point, a grid point)."""

    name: str
    auroc: float
    auprc: float
    n_test: int


@dataclass
class ExperimentReport:
    """Results of one protocol run with recomputable aggregates."""

    protocol: str
    seed: int
    config: dict[str, str]
    units: list[UnitResult]
    aggregates: dict[str, float]
    notes: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    attachments: dict = field(default_factory=dict, compare=False, repr=False)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _basic_aggregates(units: list[UnitResult]) -> dict[str, float]:
    out: dict[str, float] = {}
    out["auroc_mean"], out["auroc_std"] = _mean_std([u.auroc for u in units])
    out["auprc_mean"], out["auprc_std"] = _mean_std([u.auprc for u in units])
    return out


def config_snapshot(
    stage1: Stage1Config, stage2: Stage2Config, extra: dict[str, object]
) -> dict[str, str]:
    snap: dict[str, str] = {}
    for prefix, cfg in (("stage1", stage1), ("stage2", stage2)):
        for name, value in sorted(vars(cfg).items()):
            snap[f"{prefix}.{name}"] = repr(value)
    for name, value in sorted(extra.items()):
        snap[f"protocol.{name}"] = repr(value)
    return snap


def train_prototypes(
    dataset: Dataset, config: Stage1Config, seed: int, log=None
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Stage I for both domains; returns (drug table, disease table, traces)."""
    traces = {}
    cfg_u = replace(config, seed=derive_seed(seed, "stage1", "drug"))
    enc_u, traces["drug"] = train_stage1(dataset.S_U, cfg_u, log=log)
    cfg_v = replace(config, seed=derive_seed(seed, "stage1", "disease"))
    enc_v, traces["disease"] = train_stage1(dataset.S_V, cfg_v, log=log)
    return (
        prototype_table(enc_u, dataset.S_U),
        prototype_table(enc_v, dataset.S_V),
        traces,
    )


def evaluate_split(
    dataset: Dataset,
    split: CellSplit,
    proto_u: np.ndarray,
    proto_v: np.ndarray,
    config: Stage2Config,
    cells=None,
) -> dict:
    """Train a fresh scorer on the split and score the given cells (default: test).

    Returns scores/labels in ascending cell order plus the loss trace.
    """
    model, trace = train_stage2(dataset, split, proto_u, proto_v, config)
    targets = sorted(split.test_cells) if cells is None else list(cells)
    scored = score_cells(model, dataset, split, targets)
    scores = np.array([s for _, s in scored])
    labels = np.array([dataset.label(c) for c, _ in scored], dtype=np.float64)
    return {
        "scores": scores,
        "labels": labels,
        "cells": targets,
        "loss_trace": trace,
        "model": model,
    }


def _unit_from_scores(name: str, scores: np.ndarray, labels: np.ndarray) -> UnitResult:
    return UnitResult(
        name=name,
        auroc=auroc(scores, labels),
        auprc=auprc(scores, labels),
        n_test=int(scores.size),
    )


# -- parallel unit execution -----------------------------------------------------


def _run_units(tasks: list[tuple], worker, jobs: int) -> list[dict]:
    """Evaluate units preserving task order; fan out to processes if jobs > 1."""
    if jobs <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


def _fold_task(task: tuple) -> dict:
    """Worker: train/evaluate one split; returns plain arrays only."""
    dataset, split, proto_u, proto_v, config, name = task
    result = evaluate_split(dataset, split, proto_u, proto_v, config)
    return {
        "name": name,
        "scores": result["scores"],
        "labels": result["labels"],
        "loss_trace": result["loss_trace"],
    }


# -- protocols ---------------------------------------------------------------------


def run_cv(
    dataset: Dataset,
    stage1: Stage1Config,
    stage2: Stage2Config,
    repeats: int = 10,
    n_folds: int = 10,
    seed: int = 0,
    jobs: int = 1,
    log=None,
) -> ExperimentReport:
    """Repeated k-fold cross-validation over positive/negative cell folds.

    Emits per-fold units plus two aggregations: over all folds pooled
    together and over per-repeat fold means.
    """
    t0 = time.perf_counter()
    proto_u, proto_v, stage1_traces = train_prototypes(dataset, stage1, seed, log=log)
    tasks = []
    for r in range(repeats):
        plan = split_folds(dataset, derive_seed(seed, "plan", r), n_folds=n_folds)
        for f in range(n_folds):
            cfg = replace(stage2, seed=derive_seed(seed, "stage2", r, f))
            tasks.append(
                (dataset, cv_split(plan, f), proto_u, proto_v, cfg, f"repeat{r}_fold{f}")
            )
    results = _run_units(tasks, _fold_task, jobs)
    units = [_unit_from_scores(r["name"], r["scores"], r["labels"]) for r in results]
    if log is not None:
        for u in units:
            log(f"{u.name}: auroc {u.auroc:.4f} auprc {u.auprc:.4f} ({u.n_test} cells)")
    aggregates = _basic_aggregates(units)
    per_repeat_auroc = []
    per_repeat_auprc = []
    for r in range(repeats):
        block = units[r * n_folds : (r + 1) * n_folds]
        per_repeat_auroc.append(float(np.mean([u.auroc for u in block])))
        per_repeat_auprc.append(float(np.mean([u.auprc for u in block])))
    aggregates["auroc_mean_of_repeat_means"], aggregates["auroc_std_of_repeat_means"] = _mean_std(per_repeat_auroc)
    aggregates["auprc_mean_of_repeat_means"], aggregates["auprc_std_of_repeat_means"] = _mean_std(per_repeat_auprc)
    report = ExperimentReport(
        protocol="cv",
        seed=seed,
        config=config_snapshot(
            stage1, stage2, {"repeats": repeats, "folds": n_folds}
        ),
        units=units,
        aggregates=aggregates,
        wall_clock=time.perf_counter() - t0,
    )
    report.attachments["stage1_loss"] = stage1_traces
    report.attachments["stage2_loss"] = {r["name"]: r["loss_trace"] for r in results}
    report.attachments["roc"] = {
        r["name"]: roc_points(r["scores"], r["labels"]) for r in results
    }
    report.attachments["pr"] = {
        r["name"]: pr_points(r["scores"], r["labels"]) for r in results
    }
    return report


def pick_coldstart_drugs(dataset: Dataset, count: int, seed: int) -> list[int]:
    """Seeded subset of drugs that have at least one positive association."""
    eligible = [k for k in range(dataset.n_drugs) if dataset.A[k].sum() > 0]
    if count >= len(eligible):
        return eligible
    rng = np.random.default_rng(derive_seed(seed, "coldstart_subset"))
    chosen = rng.choice(len(eligible), size=count, replace=False)
    return sorted(eligible[i] for i in chosen)


def _coldstart_task(task: tuple) -> dict:
    dataset, drug, proto_u, proto_v, config, split_seed = task
    split = coldstart_split(dataset, drug, split_seed)
    if split is None:
        return {"name": f"drug{drug}", "skip": "no positive associations"}
    result = evaluate_split(dataset, split, proto_u, proto_v, config)
    return {
        "name": f"drug{drug}",
        "scores": result["scores"],
        "labels": result["labels"],
        "loss_trace": result["loss_trace"],
    }


def run_coldstart(
    dataset: Dataset,
    stage1: Stage1Config,
    stage2: Stage2Config,
    drugs: list[int] | None = None,
    n_drugs: int = 20,
    seed: int = 0,
    jobs: int = 1,
    log=None,
) -> ExperimentReport:
    """Hold out whole drug rows; retrain per drug and score the hidden row.

    Per-drug mean AUROC/AUPRC is the headline aggregate; pooled-score
    variants are emitted alongside.  Drugs whose rows leave no negative
    (or no positive) test cell cannot produce a defined metric and are
    excluded and counted.
    """
    t0 = time.perf_counter()
    if drugs is None:
        drugs = pick_coldstart_drugs(dataset, n_drugs, seed)
    proto_u, proto_v, stage1_traces = train_prototypes(dataset, stage1, seed, log=log)
    tasks = []
    for k in drugs:
        cfg = replace(stage2, seed=derive_seed(seed, "stage2", k))
        tasks.append(
            (dataset, k, proto_u, proto_v, cfg, derive_seed(seed, "cold", k))
        )
    results = _run_units(tasks, _coldstart_task, jobs)
    units = []
    notes = []
    pooled_scores: list[np.ndarray] = []
    pooled_labels: list[np.ndarray] = []
    n_skipped = 0
    n_excluded = 0
    for res in results:
        if "skip" in res:
            n_skipped += 1
            notes.append(f"{res['name']} skipped: {res['skip']}")
            continue
        scores, labels = res["scores"], res["labels"]
        pooled_scores.append(scores)
        pooled_labels.append(labels)
        try:
            units.append(_unit_from_scores(res["name"], scores, labels))
        except MetricError as exc:
            n_excluded += 1
            notes.append(f"{res['name']} excluded from per-drug metrics: {exc}")
            continue
        if log is not None:
            u = units[-1]
            log(f"{u.name}: auroc {u.auroc:.4f} auprc {u.auprc:.4f}")
    if not units:
        raise MetricError("no cold-start drug produced a defined metric")
    aggregates = _basic_aggregates(units)
    all_scores = np.concatenate(pooled_scores)
    all_labels = np.concatenate(pooled_labels)
    aggregates["auroc_pooled"] = auroc(all_scores, all_labels)
    aggregates["auprc_pooled"] = auprc(all_scores, all_labels)
    aggregates["n_drugs_evaluated"] = float(len(units))
    aggregates["n_drugs_skipped"] = float(n_skipped)
    aggregates["n_drugs_excluded_single_class"] = float(n_excluded)
    aggregates["positive_rate_pooled"] = float(all_labels.mean())
    report = ExperimentReport(
        protocol="coldstart",
        seed=seed,
        config=config_snapshot(stage1, stage2, {"drugs": list(drugs)}),
        units=units,
        aggregates=aggregates,
        notes=notes,
        wall_clock=time.perf_counter() - t0,
    )
    report.attachments["stage1_loss"] = stage1_traces
    report.attachments["roc_pooled"] = roc_points(all_scores, all_labels)
    report.attachments["pr_pooled"] = pr_points(all_scores, all_labels)
    return report


def run_sparse(
    dataset: Dataset,
    lambdas: list[float],
    stage1: Stage1Config,
    stage2: Stage2Config,
    seed: int = 0,
    jobs: int = 1,
    log=None,
) -> ExperimentReport:
    """Retain a fraction of fold-0 train positives; evaluate the fixed test fold.

    The fold plan and scorer seed match run_cv's repeat 0 / fold 0, so the
    lambda = 1 entry reproduces that fold's plain result.
    """
    for lam in lambdas:
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"retained fraction must be in (0,1], got {lam}")
    t0 = time.perf_counter()
    proto_u, proto_v, stage1_traces = train_prototypes(dataset, stage1, seed, log=log)
    plan = split_folds(dataset, derive_seed(seed, "plan", 0))
    base_split = cv_split(plan, 0)
    cfg = replace(stage2, seed=derive_seed(seed, "stage2", 0, 0))
    tasks = []
    for lam in lambdas:
        split = sparsify(dataset, base_split, lam, derive_seed(seed, "sparsify"))
        tasks.append((dataset, split, proto_u, proto_v, cfg, f"lam={lam:g}"))
    results = _run_units(tasks, _fold_task, jobs)
    units = [_unit_from_scores(r["name"], r["scores"], r["labels"]) for r in results]
    if log is not None:
        for u in units:
            log(f"{u.name}: auroc {u.auroc:.4f} auprc {u.auprc:.4f}")
    aggregates = _basic_aggregates(units)
    report = ExperimentReport(
        protocol="sparse",
        seed=seed,
        config=config_snapshot(stage1, stage2, {"lambdas": [f"{l:g}" for l in lambdas]}),
        units=units,
        aggregates=aggregates,
        wall_clock=time.perf_counter() - t0,
    )
    report.attachments["stage1_loss"] = stage1_traces
    report.attachments["lambda_curve"] = {
        "lambda": [float(l) for l in lambdas],
        "auroc": [u.auroc for u in units],
        "auprc": [u.auprc for u in units],
    }
    return report


def sweep(
    dataset: Dataset,
    d0_values: list[int],
    temperatures: list[float],
    stage1: Stage1Config,
    stage2: Stage2Config,
    seed: int = 0,
    jobs: int = 1,
    log=None,
) -> ExperimentReport:
    """Grid over prototype extent and temperature, one fold per point.

    Stage I retrains per prototype extent (its output width changes);
    the fold split and scorer seed are shared with run_cv fold 0, so a
    one-point grid at matching settings equals that fold's result.
    """
    if not d0_values or not temperatures:
        raise ValueError("sweep grid must contain at least one point")
    t0 = time.perf_counter()
    plan = split_folds(dataset, derive_seed(seed, "plan", 0))
    split = cv_split(plan, 0)
    units: list[UnitResult] = []
    surface_auroc = np.zeros((len(d0_values), len(temperatures)))
    surface_auprc = np.zeros_like(surface_auroc)
    for a, d0 in enumerate(d0_values):
        proto_u, proto_v, _ = train_prototypes(
            dataset, replace(stage1, d0=d0), seed, log=log
        )
        tasks = []
        for t_val in temperatures:
            cfg = replace(
                stage2,
                d0=d0,
                temperature=float(t_val),
                seed=derive_seed(seed, "stage2", 0, 0),
            )
            tasks.append(
                (dataset, split, proto_u, proto_v, cfg, f"d0={d0},T={t_val:g}")
            )
        results = _run_units(tasks, _fold_task, jobs)
        for b, res in enumerate(results):
            unit = _unit_from_scores(res["name"], res["scores"], res["labels"])
            units.append(unit)
            surface_auroc[a, b] = unit.auroc
            surface_auprc[a, b] = unit.auprc
            if log is not None:
                log(f"{unit.name}: auroc {unit.auroc:.4f} auprc {unit.auprc:.4f}")
    aggregates = _basic_aggregates(units)
    best = max(units, key=lambda u: (u.auroc, u.name))
    aggregates["best_auroc"] = best.auroc
    report = ExperimentReport(
        protocol="sweep",
        seed=seed,
        config=config_snapshot(
            stage1,
            stage2,
            {
                "d0_values": list(d0_values),
                "temperatures": [f"{t:g}" for t in temperatures],
            },
        ),
        units=units,
        aggregates=aggregates,
        notes=[f"best unit: {best.name}"],
        wall_clock=time.perf_counter() - t0,
    )
    report.attachments["surface"] = {
        "d0": list(d0_values),
        "temperature": [float(t) for t in temperatures],
        "auroc": surface_auroc,
        "auprc": surface_auprc,
    }
    return report


def rank_candidates(
    model: Stage2Model,
    dataset: Dataset,
    split: CellSplit,
    disease: int,
    k: int,
) -> list[tuple[int, str, float]]:
    """Top-k drugs for a disease among cells that are not train positives.

    Returns (drug index, drug ID, score) sorted by descending score, ties
    by ascending drug index.  Asking for more than the candidate count
    returns all candidates and warns.
    """
    if not 0 <= disease < dataset.n_diseases:
        raise IndexError(
            f"disease index {disease} outside 0..{dataset.n_diseases - 1}"
        )
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    candidates = [
        drug
        for drug in range(dataset.n_drugs)
        if not (
            (drug, disease) in split.train_cells
            and dataset.A[drug, disease] == 1.0
        )
    ]
    cells = [Cell(drug, disease) for drug in candidates]
    scored = score_cells(model, dataset, split, cells)
    ranked = sorted(scored, key=lambda cs: (-cs[1], cs[0][0]))
    if k > len(ranked):
        warnings.warn(
            f"requested top {k} but only {len(ranked)} candidates exist; returning all"
        )
        k = len(ranked)
    return [
        (int(cell[0]), dataset.drug_ids[cell[0]], float(score))
        for cell, score in ranked[:k]
    ]


# -- report serialization -----------------------------------------------------------


def write_report(report: ExperimentReport, path: str) -> None:
    """Deterministic text payload: header, units, aggregates, notes.

    Floats are written with repr (shortest round-trip form), so identical
    results serialize to identical bytes.  Wall-clock is deliberately not
    part of the payload.
    """
    lines = [f"protocol={report.protocol}", f"seed={report.seed}"]
    for key, value in sorted(report.config.items()):
        lines.append(f"config.{key}={value}")
    for unit in report.units:
        lines.append(
            f"unit {unit.name} auroc={unit.auroc!r} auprc={unit.auprc!r} "
            f"n_test={unit.n_test}"
        )
    for key, value in sorted(report.aggregates.items()):
        lines.append(f"aggregate {key}={value!r}")
    for note in report.notes:
        lines.append(f"note {note}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path: str) -> ExperimentReport:
    """Parse a payload written by write_report."""
    protocol = ""
    seed = 0
    config: dict[str, str] = {}
    units: list[UnitResult] = []
    aggregates: dict[str, float] = {}
    notes: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("protocol="):
                protocol = line.split("=", 1)[1]
            elif line.startswith("seed="):
                seed = int(line.split("=", 1)[1])
            elif line.startswith("config."):
                key, value = line[len("config."):].split("=", 1)
                config[key] = value
            elif line.startswith("unit "):
                parts = line.split()
                fields = dict(p.split("=", 1) for p in parts[2:])
                units.append(
                    UnitResult(
                        name=parts[1],
                        auroc=float(fields["auroc"]),
                        auprc=float(fields["auprc"]),
                        n_test=int(fields["n_test"]),
                    )
                )
            elif line.startswith("aggregate "):
                key, value = line[len("aggregate "):].split("=", 1)
                aggregates[key] = float(value)
            elif line.startswith("note "):
                notes.append(line[len("note "):])
            else:
                raise ValueError(f"{path}: unrecognized report line {line!r}")
    return ExperimentReport(
        protocol=protocol,
        seed=seed,
        config=config,
        units=units,
        aggregates=aggregates,
        notes=notes,
    )
