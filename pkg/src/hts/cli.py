"""``hts`` command line: synth, preprocess, train, crossval, evaluate, gradcheck.

Every run writes its outputs under ``--out`` and finishes with
``run_manifest.json`` recording the resolved config and the exit status.
Exit codes: 0 success, 1 a check failed (divergence, gradient mismatch,
missing output), 2 bad input (config, manifest, checkpoint schema).
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import RunConfig, RunConfigError, coerce, field_types, resolve_config
from .data.dataset import Dataset, load_dataset, save_dataset
from .data.images import ImageFormatError, read_image, resize_bilinear, write_image
from .data.manifest import (
    AGE_GROUPS,
    GENDERS,
    Detection,
    ManifestError,
    format_age,
    read_manifest,
    resolve,
    write_manifest,
)
from .data.preprocess import DETECTORS, DetectorContractError, preprocess
from .data.synth import synthesize_dataset
from .data.transforms import intensity_histogram, normalize_batch, write_histogram_csv
from .evaluation.crossval import (
    MODEL_NAME,
    CrossValError,
    crossval_run,
    write_folds_csv,
    write_table_csv,
)
from .evaluation.metrics import accuracy, adjacent_accuracy, confusion, f1_scores
from .model.network import Model, predicted_labels
from .model.params import SchemaError
from .numeric.io import atomic_write
from .numeric.rng import make_rng
from .training.checkpoint import CheckpointFormatError, load_checkpoint
from .training.loop import TrainingDiverged, evaluate, fit
from .training.losses import LossConfig

log = logging.getLogger("hts")

COMMON = ("config", "seed", "out", "task", "preset", "augment")
BAD_INPUT = (RunConfigError, ManifestError, ImageFormatError, SchemaError, CheckpointFormatError,
             DetectorContractError, FileNotFoundError, NotADirectoryError, PermissionError)


class CheckFailed(RuntimeError):
    pass


def class_names(task: str) -> list[str]:
    return [format_age(g) for g in AGE_GROUPS] if task == "age8" else list(GENDERS)


def train_val_split(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = make_rng(seed, 101).permutation(n)
    n_val = int(math.floor(val_fraction * n + 0.5))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _load(cfg: RunConfig) -> Dataset:
    if not cfg.manifest:
        raise RunConfigError("no manifest given (--manifest)")
    ds = load_dataset(cfg.manifest, cfg.image_root or None, cfg.working_size())
    if len(ds) == 0:
        raise RunConfigError(f"manifest {cfg.manifest} has no rows")
    return ds


def _histogram(images: np.ndarray, out: Path, cfg: RunConfig) -> list[Path]:
    hist = intensity_histogram(images[:32])
    write_histogram_csv(out / "histogram.csv", hist)
    paths = [out / "histogram.csv"]
    if cfg.plots:
        from .plotting import plot_histogram
        paths.append(plot_histogram(hist, out / "histogram.png"))
    return paths


def cmd_synth(cfg: RunConfig, out: Path) -> list[Path]:
    classes = cfg.classes or (8 if cfg.task == "age8" else 2)
    ds = synthesize_dataset(cfg.n, classes, cfg.working_size(), cfg.seed)
    manifest = save_dataset(ds, out)
    counts = np.bincount([r.label("age8" if classes == 8 else "gender2") for r in ds.rows],
                         minlength=classes)
    print(f"wrote {len(ds)} images of {cfg.working_size()}x{cfg.working_size()} and {manifest}")
    print("class counts: " + " ".join(map(str, counts)))
    return [manifest, *(out / r.path for r in ds.rows), *_histogram(ds.images, out, cfg)]


def cmd_preprocess(cfg: RunConfig, out: Path) -> list[Path]:
    if not cfg.manifest:
        raise RunConfigError("no manifest given (--manifest)")
    if cfg.detector not in DETECTORS:
        raise RunConfigError(f"unknown detector {cfg.detector!r}; choose from {sorted(DETECTORS)}")
    if not cfg.crop and cfg.detector != "manifest":
        raise RunConfigError("detection without cropping needs the manifest detector")
    rows = read_manifest(cfg.manifest)
    root = Path(cfg.image_root) if cfg.image_root else Path(cfg.manifest).parent
    size = cfg.working_size()
    faces: dict[int, object] = {}
    crops = []

    def on_crop(row, face, det):
        face = resize_bilinear(face, size, size)
        rel = f"faces/{len(faces):05d}_{Path(row.path).stem}.ppm"
        write_image(out / rel, face)
        faces[id(row)] = dataclasses.replace(row, path=rel,
                                             detection=Detection(0, 0, size, size, det.confidence))
        crops.append(face)

    if cfg.crop:
        (out / "faces").mkdir(parents=True, exist_ok=True)
        kept, report = preprocess(rows, DETECTORS[cfg.detector], lambda r: read_image(resolve(root, r)),
                                  size, cfg.threshold, on_crop)
        kept = [faces[id(r)] for r in kept]
    else:
        kept, report = preprocess(rows, DETECTORS[cfg.detector], None, None, cfg.threshold)
    write_manifest(out / "manifest.csv", kept)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    paths = [out / "manifest.csv", out / "report.txt", *(out / r.path for r in kept if cfg.crop)]
    if crops:
        paths += _histogram(np.stack(crops), out, cfg)
    return paths


def cmd_train(cfg: RunConfig, out: Path) -> list[Path]:
    spec = cfg.spec()
    ds = _load(cfg)
    tr, va = train_val_split(len(ds), cfg.val_fraction, cfg.seed)
    train, val = ds.subset(tr), ds.subset(va)
    model = Model.create(spec, make_rng(cfg.seed, 7919))
    ckpt, epochs_csv = out / "checkpoint.htsc", out / "epochs.csv"

    def report(rec):
        print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.4f}  acc {rec.train_acc:.4f}  "
              f"val_loss {rec.val_loss:.4f}  val_acc {rec.val_acc:.4f}  ({rec.seconds:.2f}s)")

    print(f"training {spec.task} on {len(train)} images, validating on {len(val)}")
    try:
        result = fit(model, train.images, train.labels(spec.task), val.images, val.labels(spec.task),
                     cfg.train_config(), checkpoint_path=ckpt, csv_path=epochs_csv, on_epoch=report)
    except TrainingDiverged as exc:
        raise CheckFailed(f"training diverged: {exc}; epochs so far in {epochs_csv}") from exc
    best = load_checkpoint(ckpt, expect=spec)
    loss_cfg = LossConfig.for_task(spec.task, cfg.smoothing)
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("split,loss,accuracy\n")
        for name, part in (("train", train), ("val", val)):
            if len(part):
                loss, acc, _ = evaluate(best, normalize_batch(part.images, best.dtype),
                                        part.labels(spec.task), loss_cfg)
                fh.write(f"{name},{loss:.6g},{acc:.6g}\n")
                print(f"{name}: loss {loss:.4f} accuracy {acc:.4f}")
    print(f"best epoch {result.best_epoch} of {len(result.history)}"
          f"{' (stopped early)' if result.stopped_early else ''}; checkpoint {ckpt}")
    paths = [ckpt, epochs_csv, out / "metrics.csv"]
    if cfg.plots:
        from .plotting import plot_history
        paths.append(plot_history(result.history, out / "history.png"))
    return paths


def cmd_crossval(cfg: RunConfig, out: Path) -> list[Path]:
    spec = cfg.spec()
    ds = _load(cfg)
    variants = [False, True] if cfg.compare_augment else [cfg.augment]
    rows = []
    for aug in variants:
        name = f"{MODEL_NAME} with augmentation" if aug else MODEL_NAME
        print(f"{name}: {cfg.k}-fold cross-validation on {len(ds)} images")
        try:
            run = crossval_run(spec, ds, cfg.train_config(augment=aug), cfg.k, cfg.val_fraction, cfg.seed)
        except CrossValError as exc:
            if isinstance(exc.__cause__, TrainingDiverged):
                raise CheckFailed(str(exc)) from exc
            raise
        for f in run.folds:
            print(f"  fold {f.fold}: test acc {f.metrics['test_acc']:.4f} after {f.epochs} epochs")
        rows.append((name, run))
    write_table_csv(out / "crossval.csv", spec.task, rows)
    write_folds_csv(out / "folds.csv", rows)
    paths = [out / "crossval.csv", out / "folds.csv"]
    names = class_names(spec.task)
    for name, run in rows:
        slug = "augmented" if name != MODEL_NAME else "plain"
        run.test_confusion.write_csv(out / f"confusion_{slug}.csv", names)
        paths.append(out / f"confusion_{slug}.csv")
        mean, std = run.stats["test_acc"]
        print(f"{name}: test accuracy {mean:.4f} ({std:.4f})")
    if cfg.plots:
        from .plotting import plot_confusion, plot_crossval
        paths.append(plot_crossval(rows, out / "crossval.png"))
        for name, run in rows:
            slug = "augmented" if name != MODEL_NAME else "plain"
            paths.append(plot_confusion(run.test_confusion.counts, names, out / f"confusion_{slug}.png", name))
    return paths


def cmd_evaluate(cfg: RunConfig, out: Path) -> list[Path]:
    spec = cfg.spec()
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "checkpoint.htsc"
    model = load_checkpoint(ckpt, expect=spec)
    ds = _load(cfg)
    if cfg.split != "all":
        tr, va = train_val_split(len(ds), cfg.val_fraction, cfg.seed)
        ds = ds.subset(tr if cfg.split == "train" else va)
    labels = ds.labels(spec.task)
    pred = predicted_labels(model.predict_proba(normalize_batch(ds.images, model.dtype)), spec.task)
    cm = confusion(labels, pred, spec.num_classes)
    names = class_names(spec.task)
    cm.write_csv(out / "confusion.csv", names)
    lines = [("accuracy", "", accuracy(cm))]
    lines += [("f1", n, v) for n, v in zip(names, f1_scores(cm))]
    if spec.task == "age8":
        lines.append(("adjacent_accuracy", "", adjacent_accuracy(cm)))
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("metric,class,value\n")
        for metric, cls, value in lines:
            fh.write(f"{metric},{cls},{value:.6g}\n")
            print(f"{metric}{'[' + cls + ']' if cls else ''}: {value:.4f}")
    paths = [out / "confusion.csv", out / "metrics.csv"]
    if cfg.plots:
        from .plotting import plot_confusion
        paths.append(plot_confusion(cm.counts, names, out / "confusion.png", f"{cfg.split} split"))
    return paths


def cmd_gradcheck(cfg: RunConfig, out: Path) -> list[Path]:
    from .verify import TOLERANCE, gradcheck_report

    if cfg.preset != "toy":
        raise RunConfigError("gradcheck runs on the toy preset only")
    start = time.perf_counter()
    checks = gradcheck_report(cfg.spec(), cfg.seed, per_tensor=cfg.gradcheck_coords or None)
    with open(out / "gradcheck.csv", "w", encoding="utf-8") as fh:
        fh.write("block,parameter,max_rel_error,status\n")
        for c in checks:
            for name, err in c.errors.items():
                fh.write(f"{c.block},{name},{err:.3e},{'ok' if err <= TOLERANCE else 'FAIL'}\n")
    failed = []
    for c in checks:
        status = "ok" if c.passed() else "FAIL"
        print(f"{c.block:<14} {len(c.errors):3d} tensors  max rel err {c.max_error:.3e}  {status}")
        if not c.passed():
            failed.append(f"{c.block}: {', '.join(c.failing())}")
    print(f"tolerance {TOLERANCE:g}, {time.perf_counter() - start:.1f}s")
    if failed:
        raise CheckFailed("gradient check failed\n  " + "\n  ".join(failed))
    return [out / "gradcheck.csv"]


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic labelled image set"),
    "preprocess": (cmd_preprocess, "filter a manifest and crop faces"),
    "train": (cmd_train, "train one model on a train/validation split"),
    "crossval": (cmd_crossval, "k-fold cross-validation"),
    "evaluate": (cmd_evaluate, "score a checkpoint on a dataset"),
    "gradcheck": (cmd_gradcheck, "finite-difference audit of all gradients"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", metavar="PATH", help="key = value config file")
    g.add_argument("--seed", metavar="N", default=argparse.SUPPRESS)
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS)
    g.add_argument("--task", choices=("age8", "gender2"), default=argparse.SUPPRESS)
    g.add_argument("--preset", choices=("toy", "vitb32"), default=argparse.SUPPRESS)
    g.add_argument("--augment", choices=("on", "off"), default=argparse.SUPPRESS)
    g.add_argument("--no-plots", dest="plots", action="store_const", const="off",
                   default=argparse.SUPPRESS, help="skip PNG figures")
    g.add_argument("-v", "--verbose", action="store_true")
    s = common.add_argument_group("settings (any config key)")
    for name in field_types():
        if name in COMMON:
            continue
        s.add_argument(f"--{name.replace('_', '-')}", dest=name, metavar="V", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hts", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _atomic_json(path: Path, payload: dict) -> None:
    atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n").encode("utf-8"))


def _threads():
    raw = os.environ.get("HTS_THREADS", "").strip()
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise RunConfigError(f"HTS_THREADS must be an integer, got {raw!r}") from None
    return threadpool_limits(limits=max(n, 1))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(command: str, cfg: RunConfig) -> int:
    out = Path(cfg.out)
    started = _now()
    status, outputs, error = 0, [], ""
    try:
        out.mkdir(parents=True, exist_ok=True)
        with _threads():
            outputs = COMMANDS[command][0](cfg, out)
        missing = [str(p) for p in outputs if not Path(p).exists()]
        if missing:
            raise CheckFailed("declared outputs not written: " + ", ".join(missing[:5]))
    except CheckFailed as exc:
        status, error = 1, str(exc)
    except BAD_INPUT as exc:
        status, error = 2, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        status, error = 2, f"I/O error: {exc}"
    if error:
        print(f"hts {command}: {error}", file=sys.stderr)
    record = {
        "command": command,
        "version": __version__,
        "numpy": np.__version__,
        "config": cfg.snapshot(),
        "started": started,
        "finished": _now(),
        "exit_status": status,
        "error": error,
        "outputs": sorted({os.path.relpath(p, out) for p in outputs if Path(p).exists()}),
    }
    try:
        _atomic_json(out / "run_manifest.json", record)
    except OSError as exc:
        print(f"hts {command}: cannot write run manifest: {exc}", file=sys.stderr)
        status = status or 2
    return status


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    config_path = args.pop("config")
    try:
        overrides = {k: coerce(k, v) for k, v in args.items()}
        cfg = resolve_config(config_path, overrides)
    except (RunConfigError, OSError) as exc:
        print(f"hts {command}: {exc}", file=sys.stderr)
        return 2
    return run(command, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
