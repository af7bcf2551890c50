"""Config plumbing, run artifacts, sweeps, and exit codes."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

import drfit.cli as cli
from drfit.cli import (
    ConfigError,
    config_digest,
    load_config,
    main,
    run_detect,
    run_sweep,
    run_training_experiment,
    validate_config,
)
from drfit.data import load_dataset_csv

from _surrogate import mnist_root


def _synth_cfg(out_dir, **extra):
    overrides = [
        "kind=synthetic-train",
        "replications=2",
        "data.n=120",
        "train.epochs=3",
        "train.batch_size=32",
        "train.theta_lr=0.005",
        "noise.rates=[0.2,0.2]",
    ] + [f"{k}={v}" for k, v in extra.items()]
    cfg = load_config(None, overrides)
    cfg["output_dir"] = str(out_dir)
    return cfg


# ---------------------------------------------------------------------------
# config handling


def test_digest_ignores_key_order_and_output_dir():
    cfg = _synth_cfg("/tmp/a")
    d = config_digest(cfg)
    assert len(d) == 12 and all(c in "0123456789abcdef" for c in d)
    reordered = dict(reversed(list(cfg.items())))
    reordered["output_dir"] = "/somewhere/else"
    assert config_digest(reordered) == d
    changed = _synth_cfg("/tmp/a")
    changed["drfit"]["alpha"] = 2.0
    assert config_digest(changed) != d
    changed2 = _synth_cfg("/tmp/a")
    changed2["train"]["seed"] = 99
    assert config_digest(changed2) != d


def test_set_overrides_beat_the_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"drfit": {"alpha": 0.7}, "train": {"epochs": 9}}))
    cfg = load_config(str(path), ["drfit.alpha=0.9", "train.batch_size=8"])
    assert cfg["drfit"]["alpha"] == 0.9
    assert cfg["train"]["epochs"] == 9
    assert cfg["train"]["batch_size"] == 8
    # values parse as JSON when possible, else stay strings
    cfg2 = load_config(None, ["sweep.alpha_grid=[0.1,0.2]", "kind=mnist-1v7"])
    assert cfg2["sweep"]["alpha_grid"] == [0.1, 0.2]
    assert cfg2["kind"] == "mnist-1v7"


def test_validate_config_rejects_unknown_kind():
    cfg = load_config(None, ["kind=bogus"])
    with pytest.raises(ConfigError):
        validate_config(cfg)
    with pytest.raises(ConfigError):
        validate_config(load_config(None, ["kind=synthetic-train", "replications=0"]))


def test_malformed_override_is_a_config_error():
    with pytest.raises(ConfigError):
        load_config(None, ["no-equals-sign"])


# ---------------------------------------------------------------------------
# training artifacts


def _read_bytes_map(out_dir):
    out = Path(out_dir)
    names = [
        "accuracy_by_epoch.csv",
        "weight_histogram.csv",
        "separation_curve.csv",
        "extreme_examples.csv",
        "summary.json",
        "train_snapshot.csv",
    ]
    blobs = {n: (out / n).read_bytes() for n in names}
    for run in sorted(out.glob("*-seed*")):
        for n in ("trace.csv", "omega.csv"):
            blobs[f"{run.name}/{n}"] = (run / n).read_bytes()
        rec = json.loads((run / "record.json").read_text())
        rec.pop("wall_time_s")
        blobs[f"{run.name}/record.json"] = json.dumps(rec, sort_keys=True)
    return blobs


def test_experiment_writes_deterministic_artifacts(tmp_path):
    cfg_a = _synth_cfg(tmp_path / "a")
    cfg_b = _synth_cfg(tmp_path / "b")
    sum_a = run_training_experiment(cfg_a, quiet=True)
    sum_b = run_training_experiment(cfg_b, quiet=True)
    assert sum_a == sum_b
    blobs_a = _read_bytes_map(tmp_path / "a")
    blobs_b = _read_bytes_map(tmp_path / "b")
    assert blobs_a.keys() == blobs_b.keys()
    for name, blob in blobs_a.items():
        assert blob == blobs_b[name], f"artifact {name} differs between runs"


def test_trace_and_aggregate_schemas(tmp_path):
    cfg = _synth_cfg(tmp_path)
    run_training_experiment(cfg, quiet=True)
    run_dirs = sorted(Path(tmp_path).glob("*-seed*"))
    assert len(run_dirs) == 2
    with open(run_dirs[0] / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "train_loss", "train_acc", "val_acc", "test_acc"]
    assert len(rows) == 3
    with open(Path(tmp_path) / "accuracy_by_epoch.csv", newline="") as fh:
        agg = list(csv.DictReader(fh))
    assert list(agg[0]) == [
        "epoch",
        "mean_train_loss",
        "mean_train_acc",
        "mean_val_acc",
        "mean_test_acc",
    ]
    assert [r["epoch"] for r in agg] == ["1", "2", "3"]
    resolved = json.loads((Path(tmp_path) / "resolved_config.json").read_text())
    assert resolved["kind"] == "synthetic-train"
    assert config_digest(resolved) == config_digest(cfg)


def test_zero_epoch_run_still_produces_artifacts(tmp_path):
    cfg = _synth_cfg(tmp_path, **{"train.epochs": 0, "replications": 1})
    summary = run_training_experiment(cfg, quiet=True)
    assert summary["runs"] == 1 and summary["failures"] == 0
    run_dir = next(Path(tmp_path).glob("*-seed*"))
    assert (run_dir / "omega.csv").exists()
    record = json.loads((run_dir / "record.json").read_text())
    assert record["error"] is None


# ---------------------------------------------------------------------------
# sweep


def test_sweep_matches_exhaustive_table_and_grid_order(tmp_path):
    base = {
        "sweep.alpha_grid": "[0.5,1.0]",
        "sweep.lam_grid": "[0.0]",
        "replications": "1",
    }
    cfg = _synth_cfg(tmp_path / "fwd", **base)
    cfg["kind"] = "hyper-sweep"
    res = run_sweep(cfg)
    table = res["table"]
    viable = [r for r in table if not r["all_crashed"] and r["mean_val_acc"] is not None]
    expected = max(viable, key=lambda r: (r["mean_val_acc"], r["alpha"], r["lam"]))
    assert res["best"] == expected

    cfg_rev = _synth_cfg(tmp_path / "rev", **dict(base, **{"sweep.alpha_grid": "[1.0,0.5]"}))
    cfg_rev["kind"] = "hyper-sweep"
    res_rev = run_sweep(cfg_rev)
    assert res_rev["best"]["alpha"] == res["best"]["alpha"]
    acc = {r["alpha"]: r["mean_val_acc"] for r in table}
    acc_rev = {r["alpha"]: r["mean_val_acc"] for r in res_rev["table"]}
    assert acc == acc_rev  # grid order cannot leak state between points


def test_sweep_ties_break_toward_larger_alpha(tmp_path):
    """The fixed-weight baseline ignores alpha, forcing an exact tie."""
    cfg = _synth_cfg(
        tmp_path,
        **{
            "sweep.alpha_grid": "[0.5,1.0]",
            "sweep.lam_grid": "[0.0]",
            "replications": "1",
            "train.solver": "plain",
        },
    )
    cfg["kind"] = "hyper-sweep"
    res = run_sweep(cfg)
    accs = [r["mean_val_acc"] for r in res["table"]]
    assert accs[0] == accs[1]
    assert res["best"]["alpha"] == 1.0


def test_sweep_excludes_points_that_always_crash(tmp_path, monkeypatch):
    def fake_experiment(sub, quiet=False):
        if sub["drfit"]["alpha"] == 2.0:
            return {"runs": 2, "crashes": 2, "failures": 0, "mean_final_val_acc": 0.99}
        return {"runs": 2, "crashes": 0, "failures": 0, "mean_final_val_acc": 0.80}

    monkeypatch.setattr(cli, "run_training_experiment", fake_experiment)
    cfg = _synth_cfg(tmp_path, **{"sweep.alpha_grid": "[1.0,2.0]", "sweep.lam_grid": "[0.0]"})
    cfg["kind"] = "hyper-sweep"
    res = run_sweep(cfg)
    assert res["best"]["alpha"] == 1.0
    crashed_row = next(r for r in res["table"] if r["alpha"] == 2.0)
    assert crashed_row["all_crashed"] is True


# ---------------------------------------------------------------------------
# detect and mnist-prep


def test_detect_recovers_recorded_auc(tmp_path):
    cfg = _synth_cfg(tmp_path, replications=1)
    run_training_experiment(cfg, quiet=True)
    run_dir = next(Path(tmp_path).glob("*-seed*"))
    record = json.loads((run_dir / "record.json").read_text())
    out = run_detect(str(run_dir), str(Path(tmp_path) / "train_snapshot.csv"))
    assert out["auc"] == pytest.approx(record["detection_auc"], abs=1e-12)
    assert (run_dir / "separation_curve.csv").exists()


def test_mnist_prep_snapshot_roundtrip(tmp_path):
    root, _ = mnist_root()
    snap = tmp_path / "snap.csv"
    code = main(
        [
            "mnist-prep",
            "--out",
            str(snap),
            "--set",
            f"data.root={root}",
            "--set",
            "data.subsample=300",
            "--set",
            "noise.rates=[0.3,0.1]",
        ]
    )
    assert code == 0
    ds = load_dataset_csv(snap)
    assert ds.n == 300
    assert ds.n_features == 196
    # exact flip counts from the per-class rates
    flips0 = np.sum(ds.mislabel_mask & (ds.true_labels == 0))
    flips1 = np.sum(ds.mislabel_mask & (ds.true_labels == 1))
    assert flips0 == round(0.3 * np.sum(ds.true_labels == 0))
    assert flips1 == round(0.1 * np.sum(ds.true_labels == 1))


# ---------------------------------------------------------------------------
# exit codes


def test_exit_codes():
    assert main(["train", "--set", "kind=bogus"]) == 2
    assert main(["train", "--config", "/no/such/file.json"]) == 3
    assert (
        main(
            [
                "train",
                "--kind",
                "mnist-1v7",
                "--set",
                "data.root=/no/such/root",
                "--output-dir",
                "/tmp/drfit-exit-code-test",
            ]
        )
        == 3
    )
