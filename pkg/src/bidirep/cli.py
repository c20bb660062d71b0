"""Command-line entry points for training, evaluation, and ranking runs.

Every artifact-producing command creates a timestamped directory under
--out containing the resolved config, a deterministic report payload
(report.txt and friends), curve points as two-column text, rendered
figures, and a meta.txt with timing (the only file allowed to differ
between identical reruns).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, plots
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config, validate_config, write_resolved
from .data import (
    CellSplit,
    Dataset,
    LoadError,
    SplitError,
    load_dataset,
    load_split,
    save_split,
)
from .experiments import (
    ExperimentReport,
    derive_seed,
    rank_candidates,
    run_cv,
    run_coldstart,
    run_sparse,
    sweep,
    write_report,
)
from .metrics import MetricError, save_curve
from .optim import DivergenceError
from .proto import load_encoder, prototype_table, save_encoder, train_stage1
from .seqmodel import load_model, save_model, train_stage2
from dataclasses import replace


def _log(message: str) -> None:
    print(f"[bidirep] {message}", flush=True)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        cfg.raw["seed"] = str(args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
        cfg.raw["out"] = args.out
    if not cfg.out:
        cfg = replace(cfg, out="runs")
        cfg.raw["out"] = "runs"
    return cfg


def _load_dataset(cfg: RunConfig) -> Dataset:
    dataset = load_dataset(**cfg.dataset_args())
    _log(f"loaded dataset: {dataset.summary()}")
    return dataset


def _make_run_dir(cfg: RunConfig, command: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(cfg.out, f"{command}-{stamp}")
    path = base
    counter = 1
    while os.path.exists(path):
        path = f"{base}-{counter}"
        counter += 1
    os.makedirs(path)
    for sub in ("curves", "figures"):
        os.makedirs(os.path.join(path, sub), exist_ok=True)
    write_resolved(cfg, os.path.join(path, "resolved_config.txt"))
    _log(f"run directory: {path}")
    return path


def _write_meta(run_dir: str, started: float, extra: dict[str, str] | None = None) -> None:
    finished = time.time()
    lines = [
        f"version={__version__}",
        f"started={time.strftime('%Y-%m-%dT%H:%M:%S', time.localtime(started))}",
        f"finished={time.strftime('%Y-%m-%dT%H:%M:%S', time.localtime(finished))}",
        f"wall_clock_seconds={finished - started:.3f}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    with open(os.path.join(run_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_report_artifacts(report: ExperimentReport, run_dir: str) -> None:
    write_report(report, os.path.join(run_dir, "report.txt"))
    att = report.attachments
    curves_dir = os.path.join(run_dir, "curves")
    figures_dir = os.path.join(run_dir, "figures")
    if "roc" in att:
        for name, pts in att["roc"].items():
            save_curve(os.path.join(curves_dir, f"roc_{name}.txt"), pts)
        plots.roc_overlay(att["roc"], os.path.join(figures_dir, "roc.png"))
    if "pr" in att:
        for name, pts in att["pr"].items():
            save_curve(os.path.join(curves_dir, f"pr_{name}.txt"), pts)
        plots.pr_overlay(att["pr"], os.path.join(figures_dir, "pr.png"))
    if "roc_pooled" in att:
        save_curve(os.path.join(curves_dir, "roc_pooled.txt"), att["roc_pooled"])
        plots.roc_overlay(
            {"pooled": att["roc_pooled"]}, os.path.join(figures_dir, "roc_pooled.png")
        )
    if "pr_pooled" in att:
        save_curve(os.path.join(curves_dir, "pr_pooled.txt"), att["pr_pooled"])
        plots.pr_overlay(
            {"pooled": att["pr_pooled"]}, os.path.join(figures_dir, "pr_pooled.png")
        )
    if "stage2_loss" in att:
        plots.loss_curves(
            att["stage2_loss"], os.path.join(figures_dir, "stage2_loss.png")
        )
    if "stage1_loss" in att:
        plots.loss_curves(
            att["stage1_loss"],
            os.path.join(figures_dir, "stage1_loss.png"),
            title="prototype training loss",
        )
    if "lambda_curve" in att:
        lc = att["lambda_curve"]
        plots.lambda_curve(
            lc["lambda"], lc["auroc"], lc["auprc"],
            os.path.join(figures_dir, "sparsity.png"),
        )
        table = np.column_stack([lc["lambda"], lc["auroc"], lc["auprc"]])
        np.savetxt(
            os.path.join(curves_dir, "lambda_metrics.txt"), table, fmt="%.17g"
        )
    if "surface" in att:
        surf = att["surface"]
        plots.sweep_heatmap(
            surf["d0"], surf["temperature"], surf["auroc"],
            os.path.join(figures_dir, "sweep_auroc.png"), metric="AUROC",
        )
        plots.sweep_heatmap(
            surf["d0"], surf["temperature"], surf["auprc"],
            os.path.join(figures_dir, "sweep_auprc.png"), metric="AUPRC",
        )
        np.savetxt(os.path.join(curves_dir, "surface_auroc.txt"), surf["auroc"], fmt="%.17g")
        np.savetxt(os.path.join(curves_dir, "surface_auprc.txt"), surf["auprc"], fmt="%.17g")
    for key, value in sorted(report.aggregates.items()):
        _log(f"{key} = {value:.6f}" if isinstance(value, float) else f"{key} = {value}")


# -- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"FAIL: {exc}")
        print("0 checks passed, 1 failed")
        return 1
    passed, failed = validate_config(cfg)
    for line in passed + failed:
        print(line)
    print(f"{len(passed)} checks passed, {len(failed)} failed")
    return 0 if not failed else 1


def cmd_train_proto(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    started = time.time()
    run_dir = _make_run_dir(cfg, "train-proto")
    traces = {}
    for domain, S in (("drug", dataset.S_U), ("disease", dataset.S_V)):
        stage_cfg = replace(
            cfg.stage1, seed=derive_seed(cfg.seed, "stage1", domain)
        )
        _log(f"training {domain} prototype encoder (d0={stage_cfg.d0})")
        encoder, trace = train_stage1(S, stage_cfg, log=_log)
        traces[domain] = trace
        save_encoder(
            encoder, os.path.join(run_dir, "checkpoints", f"encoder_{domain}"), domain
        )
    with open(os.path.join(run_dir, "losses.txt"), "w", encoding="utf-8") as fh:
        for domain, trace in traces.items():
            for epoch, value in enumerate(trace):
                fh.write(f"{domain} {epoch} {value!r}\n")
    plots.loss_curves(
        traces,
        os.path.join(run_dir, "figures", "stage1_loss.png"),
        title="prototype training loss",
    )
    _write_meta(run_dir, started)
    _log("prototype encoders saved")
    return 0


def _load_prototypes(encoders_dir: str, dataset: Dataset, d0: int):
    tables = {}
    for domain, S, extent in (
        ("drug", dataset.S_U, dataset.n_drugs),
        ("disease", dataset.S_V, dataset.n_diseases),
    ):
        path = os.path.join(encoders_dir, f"encoder_{domain}")
        encoder, meta = load_encoder(path)
        if meta.get("domain") != domain:
            raise CheckpointError(
                f"{path} holds a {meta.get('domain')!r} encoder, expected {domain!r}"
            )
        if encoder.n_inputs != extent:
            raise CheckpointError(
                f"{domain} encoder expects {encoder.n_inputs} inputs but the "
                f"dataset has {extent} {domain}s"
            )
        if encoder.d0 != d0:
            raise CheckpointError(
                f"{domain} encoder produces d0={encoder.d0}, config says {d0}"
            )
        tables[domain] = prototype_table(encoder, S)
    return tables["drug"], tables["disease"]


def full_train_split(dataset: Dataset, seed: int) -> CellSplit:
    """All positives plus an equal count of seeded negatives; empty test."""
    positives = dataset.positive_cells()
    zeros = dataset.zero_cells()
    if len(zeros) < len(positives):
        raise SplitError(
            f"need {len(positives)} negatives, only {len(zeros)} zero cells exist"
        )
    rng = np.random.default_rng(derive_seed(seed, "train_split"))
    chosen = rng.choice(len(zeros), size=len(positives), replace=False)
    train = set(positives) | {zeros[i] for i in chosen}
    return CellSplit(train_cells=train, test_cells=set())


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    proto_u, proto_v = _load_prototypes(args.encoders, dataset, cfg.stage1.d0)
    started = time.time()
    run_dir = _make_run_dir(cfg, "train")
    split = full_train_split(dataset, cfg.seed)
    save_split(
        split, os.path.join(run_dir, "split.txt"), protocol="train", seed=cfg.seed
    )
    stage2 = replace(cfg.stage2, seed=derive_seed(cfg.seed, "stage2", "full"))
    model, trace = train_stage2(dataset, split, proto_u, proto_v, stage2, log=_log)
    save_model(model, os.path.join(run_dir, "checkpoints", "model"))
    with open(os.path.join(run_dir, "losses.txt"), "w", encoding="utf-8") as fh:
        for epoch, value in enumerate(trace):
            fh.write(f"{epoch} {value!r}\n")
    plots.loss_curves({"train": trace}, os.path.join(run_dir, "figures", "stage2_loss.png"))
    _write_meta(run_dir, started)
    _log("model checkpoint saved")
    return 0


def cmd_cv(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    started = time.time()
    run_dir = _make_run_dir(cfg, "cv")
    report = run_cv(
        dataset,
        cfg.stage1,
        cfg.stage2,
        repeats=cfg.protocol["repeats"],
        n_folds=cfg.protocol["folds"],
        seed=cfg.seed,
        jobs=args.jobs,
        log=_log,
    )
    _write_report_artifacts(report, run_dir)
    _write_meta(run_dir, started, {"wall_clock_reported": f"{report.wall_clock:.3f}"})
    return 0


def cmd_coldstart(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    started = time.time()
    run_dir = _make_run_dir(cfg, "coldstart")
    drugs = None
    if cfg.protocol["drugs"] != "auto":
        drugs = [int(p) for p in str(cfg.protocol["drugs"]).split(",") if p.strip()]
    report = run_coldstart(
        dataset,
        cfg.stage1,
        cfg.stage2,
        drugs=drugs,
        n_drugs=cfg.protocol["n_drugs"],
        seed=cfg.seed,
        jobs=args.jobs,
        log=_log,
    )
    _write_report_artifacts(report, run_dir)
    _write_meta(run_dir, started)
    return 0


def cmd_sparse(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    started = time.time()
    run_dir = _make_run_dir(cfg, "sparse")
    report = run_sparse(
        dataset,
        cfg.protocol["lambdas"],
        cfg.stage1,
        cfg.stage2,
        seed=cfg.seed,
        jobs=args.jobs,
        log=_log,
    )
    _write_report_artifacts(report, run_dir)
    _write_meta(run_dir, started)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    started = time.time()
    run_dir = _make_run_dir(cfg, "sweep")
    report = sweep(
        dataset,
        cfg.protocol["d0_values"],
        cfg.protocol["temperatures"],
        cfg.stage1,
        cfg.stage2,
        seed=cfg.seed,
        jobs=args.jobs,
        log=_log,
    )
    _write_report_artifacts(report, run_dir)
    _write_meta(run_dir, started)
    return 0


def _resolve_disease(dataset: Dataset, token: str) -> int:
    try:
        index = int(token)
    except ValueError:
        if token in dataset.disease_ids:
            return dataset.disease_ids.index(token)
        raise ConfigError(f"protocol.disease {token!r} is not an index or known ID") from None
    if not 0 <= index < dataset.n_diseases:
        raise ConfigError(
            f"protocol.disease index {index} outside 0..{dataset.n_diseases - 1}"
        )
    return index


def cmd_rank(args) -> int:
    cfg = _load_run_config(args)
    dataset = _load_dataset(cfg)
    model = load_model(args.model, dataset)
    split, _ = load_split(args.split, dataset)
    disease = _resolve_disease(dataset, str(cfg.protocol["disease"]))
    started = time.time()
    run_dir = _make_run_dir(cfg, "rank")
    ranked = rank_candidates(model, dataset, split, disease, cfg.protocol["k"])
    disease_id = dataset.disease_ids[disease]
    with open(os.path.join(run_dir, "ranking.txt"), "w", encoding="utf-8") as fh:
        for position, (idx, drug_id, score) in enumerate(ranked, start=1):
            fh.write(f"{position}\t{idx}\t{drug_id}\t{score!r}\n")
    plots.ranking_bar(
        ranked,
        os.path.join(run_dir, "figures", "ranking.png"),
        title=f"top candidates for {disease_id}",
    )
    for position, (idx, drug_id, score) in enumerate(ranked, start=1):
        _log(f"#{position} {drug_id} (drug {idx}) score {score:.4f}")
    _write_meta(run_dir, started)
    return 0


# -- argument parsing -------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="key-value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--out", default=None, help="output directory root")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bidirep",
        description="Two-stage drug repositioning: prototypes plus sequence scoring",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    handlers = {
        "validate": (cmd_validate, "check a config file and report every test"),
        "train-proto": (cmd_train_proto, "train and save prototype encoders"),
        "train": (cmd_train, "train a full scorer from saved encoders"),
        "cv": (cmd_cv, "repeated cross-validation"),
        "coldstart": (cmd_coldstart, "whole-row holdout evaluation"),
        "sparse": (cmd_sparse, "sparsity stress test on one fold"),
        "sweep": (cmd_sweep, "prototype-extent x temperature grid"),
        "rank": (cmd_rank, "rank candidate drugs for one disease"),
    }
    for name, (handler, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "train":
            p.add_argument(
                "--encoders",
                required=True,
                help="checkpoints dir holding encoder_drug/ and encoder_disease/",
            )
        if name == "rank":
            p.add_argument("--model", required=True, help="stage-two model checkpoint dir")
            p.add_argument("--split", required=True, help="split manifest used in training")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, LoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, DivergenceError, MetricError, SplitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
