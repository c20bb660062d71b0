"""End-to-end command tests: artifacts, determinism, exit codes."""

import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bidirep.cli import main
from bidirep.data import save_dataset
from bidirep.experiments import read_report
from bidirep.synth import block_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    dataset = block_dataset(n_drugs=8, n_diseases=6, n_blocks=2, sim_noise=0.02, seed=11)
    paths = save_dataset(dataset, str(root / "data"))
    config = root / "run.cfg"
    config.write_text(
        "\n".join(
            [
                "# tiny smoke configuration",
                f"data.association={paths['association']}",
                f"data.drug_sim={paths['drug_sim']}",
                f"data.disease_sim={paths['disease_sim']}",
                f"data.drug_ids={paths['drug_ids']}",
                f"data.disease_ids={paths['disease_ids']}",
                "stage1.d0=4",
                "stage1.hidden=12",
                "stage1.epochs=15",
                "stage1.pair_batch=32",
                "stage1.lr=0.01",
                "stage2.d_w=4",
                "stage2.heads=2",
                "stage2.l_max=2",
                "stage2.epochs=3",
                "stage2.batch_size=16",
                "stage2.lr=0.003",
                "protocol.folds=3",
                "protocol.repeats=1",
                "protocol.lambdas=0.5,1.0",
                "protocol.d0_values=4",
                "protocol.temperatures=0,2",
                "protocol.drugs=0,1",
                "protocol.disease=0",
                "protocol.k=4",
                "seed=3",
            ]
        )
        + "\n"
    )
    return {"root": root, "config": str(config), "dataset": dataset}


def run_dir_of(out: Path) -> Path:
    entries = [p for p in out.iterdir() if p.is_dir()]
    assert len(entries) == 1, f"expected one run dir, found {entries}"
    return entries[0]


# -- validate ----------------------------------------------------------------------


def test_validate_passes(workspace, capsys):
    assert main(["validate", "--config", workspace["config"]]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "ok: d0 + d_w = 8 divisible by 2 heads" in out
    assert ", 0 failed" in out


def test_validate_divisibility_failure(workspace, capsys):
    code = main(
        ["validate", "--config", workspace["config"], "--set", "stage2.d_w=63"]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "not divisible" in out


def test_validate_missing_data_file(workspace, capsys):
    code = main(
        [
            "validate",
            "--config",
            workspace["config"],
            "--set",
            "data.association=/nonexistent/assoc.txt",
        ]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL: data.association file exists" in out


def test_validate_unknown_key(workspace, capsys):
    code = main(
        ["validate", "--config", workspace["config"], "--set", "stage2.dd_w=1"]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "unknown config key" in out
    assert "nearest valid key" in out


def test_validate_multiple_failures_all_reported(workspace, capsys):
    code = main(
        [
            "validate",
            "--config",
            workspace["config"],
            "--set",
            "protocol.folds=1",
            "--set",
            "protocol.k=0",
        ]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL: folds 1 >= 2" in out
    assert "FAIL: k 0 >= 1" in out


# -- cross-validation run --------------------------------------------------------------


def test_cv_run_artifacts(workspace, tmp_path):
    out = tmp_path / "runs"
    code = main(
        ["cv", "--config", workspace["config"], "--out", str(out), "--seed", "5"]
    )
    assert code == 0
    run = run_dir_of(out)
    assert run.name.startswith("cv-")
    report = read_report(str(run / "report.txt"))
    assert report.protocol == "cv"
    assert report.seed == 5
    assert [u.name for u in report.units] == [f"repeat0_fold{f}" for f in range(3)]
    assert "auroc_mean" in report.aggregates
    resolved = (run / "resolved_config.txt").read_text()
    assert "seed=5" in resolved
    assert "stage2.d_w=4" in resolved
    for f in range(3):
        assert (run / "curves" / f"roc_repeat0_fold{f}.txt").exists()
        assert (run / "curves" / f"pr_repeat0_fold{f}.txt").exists()
    for figure in ("roc.png", "pr.png", "stage1_loss.png", "stage2_loss.png"):
        assert (run / "figures" / figure).stat().st_size > 0
    meta = (run / "meta.txt").read_text()
    assert "wall_clock_seconds=" in meta
    assert "version=" in meta


def test_cv_rerun_is_byte_identical(workspace, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    payloads = []
    for out in outs:
        assert (
            main(["cv", "--config", workspace["config"], "--out", str(out)]) == 0
        )
        run = run_dir_of(out)
        payloads.append((run / "report.txt").read_bytes())
    assert payloads[0] == payloads[1]


# -- training chain -----------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_chain(workspace, tmp_path_factory):
    """train-proto then train; returns the artifact paths."""
    out = tmp_path_factory.mktemp("chain")
    proto_out = out / "proto"
    assert (
        main(
            [
                "train-proto",
                "--config",
                workspace["config"],
                "--out",
                str(proto_out),
            ]
        )
        == 0
    )
    proto_run = run_dir_of(proto_out)
    encoders = proto_run / "checkpoints"
    assert (encoders / "encoder_drug" / "manifest.txt").exists()
    assert (encoders / "encoder_disease" / "manifest.txt").exists()
    train_out = out / "train"
    assert (
        main(
            [
                "train",
                "--config",
                workspace["config"],
                "--out",
                str(train_out),
                "--encoders",
                str(encoders),
            ]
        )
        == 0
    )
    train_run = run_dir_of(train_out)
    return {
        "encoders": encoders,
        "model": train_run / "checkpoints" / "model",
        "split": train_run / "split.txt",
        "train_run": train_run,
        "proto_run": proto_run,
    }


def test_train_proto_artifacts(trained_chain):
    run = trained_chain["proto_run"]
    losses = (run / "losses.txt").read_text().strip().split("\n")
    domains = {line.split()[0] for line in losses}
    assert domains == {"drug", "disease"}
    assert (run / "figures" / "stage1_loss.png").stat().st_size > 0


def test_train_artifacts(trained_chain):
    run = trained_chain["train_run"]
    assert (trained_chain["model"] / "manifest.txt").exists()
    split_text = (run / "split.txt").read_text()
    assert "protocol=train" in split_text
    losses = (run / "losses.txt").read_text().strip().split("\n")
    assert len(losses) == 3  # stage2.epochs
    assert (run / "figures" / "stage2_loss.png").stat().st_size > 0


def test_rank_run(workspace, trained_chain, tmp_path):
    out = tmp_path / "rank"
    code = main(
        [
            "rank",
            "--config",
            workspace["config"],
            "--out",
            str(out),
            "--model",
            str(trained_chain["model"]),
            "--split",
            str(trained_chain["split"]),
        ]
    )
    assert code == 0
    run = run_dir_of(out)
    lines = (run / "ranking.txt").read_text().strip().split("\n")
    assert len(lines) == 4  # protocol.k
    scores = []
    for position, line in enumerate(lines, start=1):
        pos, idx, drug_id, score = line.split("\t")
        assert int(pos) == position
        assert drug_id == workspace["dataset"].drug_ids[int(idx)]
        scores.append(float(score))
    assert scores == sorted(scores, reverse=True)
    assert (run / "figures" / "ranking.png").stat().st_size > 0


def test_rank_by_disease_id(workspace, trained_chain, tmp_path):
    out = tmp_path / "rankid"
    disease_id = workspace["dataset"].disease_ids[1]
    code = main(
        [
            "rank",
            "--config",
            workspace["config"],
            "--out",
            str(out),
            "--set",
            f"protocol.disease={disease_id}",
            "--model",
            str(trained_chain["model"]),
            "--split",
            str(trained_chain["split"]),
        ]
    )
    assert code == 0


def test_rank_bad_model_exits_3(workspace, trained_chain, tmp_path, capsys):
    code = main(
        [
            "rank",
            "--config",
            workspace["config"],
            "--out",
            str(tmp_path / "x"),
            "--model",
            str(tmp_path / "not_a_model"),
            "--split",
            str(trained_chain["split"]),
        ]
    )
    assert code == 3
    assert "error:" in capsys.readouterr().err


def test_train_mismatched_encoders_exit_3(workspace, trained_chain, tmp_path, capsys):
    code = main(
        [
            "train",
            "--config",
            workspace["config"],
            "--set",
            "stage1.d0=8",
            "--set",
            "stage2.d_w=8",
            "--out",
            str(tmp_path / "y"),
            "--encoders",
            str(trained_chain["encoders"]),
        ]
    )
    assert code == 3
    assert "d0=4" in capsys.readouterr().err


# -- other protocols through the CLI ---------------------------------------------------


def test_sparse_run_artifacts(workspace, tmp_path):
    out = tmp_path / "runs"
    assert main(["sparse", "--config", workspace["config"], "--out", str(out)]) == 0
    run = run_dir_of(out)
    report = read_report(str(run / "report.txt"))
    assert [u.name for u in report.units] == ["lam=0.5", "lam=1"]
    table = np.loadtxt(str(run / "curves" / "lambda_metrics.txt"))
    assert table.shape == (2, 3)
    np.testing.assert_array_equal(table[:, 0], [0.5, 1.0])
    assert (run / "figures" / "sparsity.png").stat().st_size > 0


def test_sweep_run_artifacts(workspace, tmp_path):
    out = tmp_path / "runs"
    assert main(["sweep", "--config", workspace["config"], "--out", str(out)]) == 0
    run = run_dir_of(out)
    report = read_report(str(run / "report.txt"))
    assert [u.name for u in report.units] == ["d0=4,T=0", "d0=4,T=2"]
    assert "best_auroc" in report.aggregates
    surface = np.loadtxt(str(run / "curves" / "surface_auroc.txt"))
    assert surface.shape == (2,)  # one extent, two temperatures
    assert (run / "figures" / "sweep_auroc.png").stat().st_size > 0
    assert (run / "figures" / "sweep_auprc.png").stat().st_size > 0


def test_coldstart_run_artifacts(workspace, tmp_path):
    out = tmp_path / "runs"
    assert main(["coldstart", "--config", workspace["config"], "--out", str(out)]) == 0
    run = run_dir_of(out)
    report = read_report(str(run / "report.txt"))
    assert report.protocol == "coldstart"
    assert [u.name for u in report.units] == ["drug0", "drug1"]
    assert report.aggregates["n_drugs_evaluated"] == 2.0
    assert (run / "curves" / "roc_pooled.txt").exists()
    assert (run / "figures" / "pr_pooled.png").stat().st_size > 0


# -- failure exits ------------------------------------------------------------------


def test_missing_config_exits_2(tmp_path, capsys):
    code = main(["cv", "--config", str(tmp_path / "absent.cfg")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_missing_dataset_exits_2(workspace, tmp_path, capsys):
    code = main(
        [
            "cv",
            "--config",
            workspace["config"],
            "--out",
            str(tmp_path / "z"),
            "--set",
            "data.association=/nonexistent/assoc.txt",
        ]
    )
    assert code == 2


def test_bad_config_value_exits_2(workspace, tmp_path, capsys):
    code = main(
        [
            "cv",
            "--config",
            workspace["config"],
            "--out",
            str(tmp_path / "z"),
            "--set",
            "stage2.epochs=many",
        ]
    )
    assert code == 2
    assert "stage2.epochs" in capsys.readouterr().err


def test_argparse_requires_subcommand():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_train_requires_encoders_flag(workspace):
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--config", workspace["config"]])
    assert excinfo.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    from bidirep import __version__

    assert __version__ in capsys.readouterr().out


def test_module_invocation(workspace):
    env = dict(os.environ)
    src = str(Path(__file__).resolve().parents[1] / "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.run(
        [sys.executable, "-m", "bidirep.cli", "validate", "--config", workspace["config"]],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0
    assert ", 0 failed" in proc.stdout
