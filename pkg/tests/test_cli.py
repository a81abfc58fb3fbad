import csv
import json

import numpy as np
import pytest

import hts.numeric.tensor as T
from hts import cli
from hts.config import (
    RunConfig,
    RunConfigError,
    coerce,
    read_config_file,
    resolve_config,
)
from hts.data.manifest import read_manifest, write_manifest
from hts.data.preprocess import filter_counts_fixture


def manifest_of(out):
    return json.loads((out / "run_manifest.json").read_text())


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(out), "--n", "40", "--seed", "1", "--no-plots"]) == 0
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("train")
    code = cli.main(["train", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out),
                     "--max-epochs", "2", "--lr", "3e-3", "--batch-size", "16"])
    assert code == 0
    return out


# ---------------------------------------------------------------- configuration


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("n = 16\nseed = 3\nlr = 0.5\n")
    cfg = resolve_config(cfg_file, {"seed": 4})
    assert (cfg.n, cfg.seed, cfg.lr, cfg.batch_size) == (16, 4, 0.5, RunConfig().batch_size)
    out = tmp_path / "o"
    assert cli.main(["synth", "--config", str(cfg_file), "--seed", "4", "--out", str(out), "--no-plots"]) == 0
    snap = manifest_of(out)["config"]
    assert (snap["n"], snap["seed"], snap["lr"]) == (16, 4, 0.5)
    assert len(read_manifest(out / "manifest.csv")) == 16


def test_config_sections_and_errors(tmp_path):
    (tmp_path / "a.cfg").write_text("[data]\nn = 8\n[train]\naugment = on\n")
    assert read_config_file(tmp_path / "a.cfg") == {"n": 8, "augment": True}
    (tmp_path / "b.cfg").write_text("[x]\nn = 8\n[y]\nn = 9\n")
    with pytest.raises(RunConfigError):
        read_config_file(tmp_path / "b.cfg")
    with pytest.raises(RunConfigError):
        coerce("bogus", "1")
    with pytest.raises(RunConfigError):
        coerce("n", "many")
    assert coerce("crop", "off") is False and coerce("smoothing", "none") is None


def test_bad_config_exits_2(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("learning_rate = 1\n")
    assert cli.main(["synth", "--config", str(tmp_path / "c.cfg"), "--out", str(tmp_path)]) == 2
    assert "learning_rate" in capsys.readouterr().err


# ---------------------------------------------------------------- synth and preprocess


def test_synth_outputs_and_determinism(tmp_path, synth_dir):
    again = tmp_path / "again"
    assert cli.main(["synth", "--out", str(again), "--n", "40", "--seed", "1"]) == 0
    assert (again / "manifest.csv").read_bytes() == (synth_dir / "manifest.csv").read_bytes()
    assert (again / "histogram.png").stat().st_size > 0
    rec = manifest_of(again)
    assert rec["exit_status"] == 0 and rec["command"] == "synth" and "manifest.csv" in rec["outputs"]
    for key in ("version", "numpy", "started", "finished", "config"):
        assert key in rec


def test_preprocess_fixture_without_crop(tmp_path, capsys):
    write_manifest(tmp_path / "in.csv", filter_counts_fixture())
    out = tmp_path / "pre"
    assert cli.main(["preprocess", "--manifest", str(tmp_path / "in.csv"), "--out", str(out),
                     "--crop", "off"]) == 0
    text = capsys.readouterr().out
    for line in ("Images with no gender found: 779", "Images with no age found: 1252",
                 "19370 - 3315 = 16055"):
        assert line in text
    assert len(read_manifest(out / "manifest.csv")) == 16055
    assert (out / "report.txt").read_text() in text


def test_preprocess_crops_and_lists_missing(tmp_path, synth_dir, capsys):
    rows = read_manifest(synth_dir / "manifest.csv")[:6]
    rows[2] = rows[2].__class__("images/nowhere.ppm", rows[2].age_group, rows[2].gender, rows[2].detection)
    write_manifest(tmp_path / "m.csv", rows)
    out = tmp_path / "pre"
    code = cli.main(["preprocess", "--manifest", str(tmp_path / "m.csv"), "--image-root", str(synth_dir),
                     "--out", str(out), "--detector", "whole"])
    assert code == 0
    assert "images/nowhere.ppm" in capsys.readouterr().out
    kept = read_manifest(out / "manifest.csv")
    assert len(kept) == 5 and all((out / r.path).exists() for r in kept)


def test_missing_manifest_exits_2(tmp_path):
    assert cli.main(["train", "--manifest", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert manifest_of(tmp_path)["exit_status"] == 2


# ---------------------------------------------------------------- train and evaluate


def test_train_outputs(trained):
    for name in ("checkpoint.htsc", "epochs.csv", "metrics.csv", "history.png"):
        assert (trained / name).exists()
    rows = list(csv.DictReader(open(trained / "epochs.csv")))
    assert len(rows) == 2
    splits = [r["split"] for r in csv.DictReader(open(trained / "metrics.csv"))]
    assert splits == ["train", "val"]


def test_zero_lr_keeps_initial_weights(tmp_path, synth_dir):
    from hts.model.network import Model
    from hts.numeric.rng import make_rng
    from hts.training.checkpoint import load_checkpoint

    out = tmp_path / "z"
    assert cli.main(["train", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out), "--lr", "0",
                     "--max-epochs", "1", "--no-plots"]) == 0
    loaded = load_checkpoint(out / "checkpoint.htsc")
    fresh = Model.create(loaded.spec, make_rng(0, 7919))
    for k, v in fresh.params.items():
        np.testing.assert_array_equal(loaded.params[k], v)


def test_divergence_exits_nonzero(tmp_path, synth_dir, monkeypatch, capsys):
    import hts.training.loop as loop
    monkeypatch.setattr(loop, "normalize_batch", lambda x, dtype=np.float32: np.full(x.shape, np.nan, dtype))
    out = tmp_path / "nan"
    code = cli.main(["train", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out),
                     "--max-epochs", "1", "--no-plots"])
    assert code == 1
    assert "diverged" in capsys.readouterr().err
    assert manifest_of(out)["exit_status"] == 1


def test_evaluate(trained, synth_dir):
    out = trained / "eval"
    assert cli.main(["evaluate", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out),
                     "--checkpoint", str(trained / "checkpoint.htsc"), "--split", "val"]) == 0
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert [r["metric"] for r in rows].count("f1") == 8 and rows[-1]["metric"] == "adjacent_accuracy"
    lines = (out / "confusion.csv").read_text().splitlines()
    assert len(lines) == 9 and sum(int(v) for ln in lines[1:] for v in ln.split(",")[1:]) == 8
    assert (out / "confusion.png").exists()


def test_evaluate_schema_mismatch(trained, synth_dir, capsys):
    out = trained / "wrong"
    code = cli.main(["evaluate", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out),
                     "--checkpoint", str(trained / "checkpoint.htsc"), "--task", "gender2"])
    assert code == 2
    assert "Schema" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_2(tmp_path, synth_dir):
    (tmp_path / "bad.htsc").write_bytes(b"garbage")
    assert cli.main(["evaluate", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(tmp_path),
                     "--checkpoint", str(tmp_path / "bad.htsc")]) == 2


# ---------------------------------------------------------------- cross-validation


def _masked(path, column):
    rows = list(csv.reader(open(path)))
    idx = rows[0].index(column)
    return [r[:idx] + r[idx + 1:] for r in rows]


def test_crossval_reproducible(tmp_path, synth_dir):
    args = ["crossval", "--manifest", str(synth_dir / "manifest.csv"), "--k", "2", "--max-epochs", "1",
            "--lr", "3e-3", "--batch-size", "16", "--compare-augment", "on"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b"), "--no-plots"]) == 0
    col = "Epoch Time Mean in Sec (Std)"
    a, b = _masked(tmp_path / "a" / "crossval.csv", col), _masked(tmp_path / "b" / "crossval.csv", col)
    assert a == b and [r[0] for r in a[1:]] == ["hybrid-sequencer", "hybrid-sequencer with augmentation"]
    fa = _masked(tmp_path / "a" / "folds.csv", "epoch_seconds")
    assert fa == _masked(tmp_path / "b" / "folds.csv", "epoch_seconds") and len(fa) == 5
    for name in ("confusion_plain.csv", "confusion_augmented.csv", "crossval.png", "confusion_plain.png"):
        assert (tmp_path / "a" / name).exists()


# ---------------------------------------------------------------- gradient audit


def test_gradcheck_passes(tmp_path, capsys):
    assert cli.main(["gradcheck", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "gradcheck.csv")))
    assert rows and all(r["status"] == "ok" for r in rows)
    assert {r["block"] for r in rows} >= {"attention", "encoder", "bilstm", "model"}


def test_gradcheck_catches_broken_sigmoid(tmp_path, monkeypatch, capsys):
    real = T._sigmoid_grad
    monkeypatch.setattr(T, "_sigmoid_grad", lambda y, g: 1.5 * real(y, g))
    assert cli.main(["gradcheck", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "bilstm:" in err and "attention:" not in err


def test_gradcheck_rejects_large_preset(tmp_path):
    assert cli.main(["gradcheck", "--preset", "vitb32", "--out", str(tmp_path)]) == 2
