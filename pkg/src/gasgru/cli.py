"""Command-line entry point: ``generate``, ``train``, ``evaluate`` and ``bench``.

Every command reads one JSON run config (``--config``); flags override it.
Outputs go to ``--out`` or, by default, to a per-command directory under
``$GASGRU_OUT_ROOT`` (``runs`` when unset).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset, metrics, simgen, wavelet
from . import train as training
from .baselines import BaselineConfig, fit_baseline
from .config import ConfigError, from_dict
from .dataset import Dataset, DatasetError, GasLabel
from .nn import ShapeError

log = logging.getLogger("gasgru")

OUT_ROOT_ENV = "GASGRU_OUT_ROOT"
DEFAULT_OUT_ROOT = "runs"
MODELS = ("GRU", "SVM", "RF", "KNN")


class CliError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    folds: int = 5

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    """The whole run in one object. ``seed`` is the master seed and is copied
    into every section, so sections do not carry their own."""

    seed: int = 0
    sensors: tuple[str, ...] = ("TGS813", "TGS2611")
    one_sensor: str = "TGS2611"
    models: tuple[str, ...] = MODELS
    generate: simgen.GenConfig = field(default_factory=simgen.GenConfig)
    split: SplitConfig = SplitConfig()
    train: training.TrainConfig = training.TrainConfig()
    baselines: BaselineConfig = BaselineConfig()

    def __post_init__(self):
        if not self.sensors:
            raise ConfigError("sensors must name at least one channel")
        unknown = [m for m in self.models if m not in MODELS]
        if unknown or not self.models:
            raise ConfigError(f"unknown model(s) {unknown}; choose from {', '.join(MODELS)}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")
        for section in ("generate", "train"):
            if "seed" in (d.get(section) or {}):
                raise ConfigError(f"[{section}] seed is set by the top-level 'seed' key")
        for part in ("rf", "svm"):
            if "seed" in ((d.get("baselines") or {}).get(part) or {}):
                raise ConfigError(f"[baselines.{part}] seed is set by the top-level 'seed' key")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        return cls(
            seed=seed,
            sensors=_names(d.get("sensors", cls.sensors), "sensors"),
            one_sensor=str(d.get("one_sensor", cls.one_sensor)),
            models=parse_models(d.get("models", MODELS)),
            generate=simgen.GenConfig.from_dict(d.get("generate") or {}),
            split=from_dict(SplitConfig, d.get("split"), "split"),
            train=training.TrainConfig.from_dict(d.get("train") or {}),
            baselines=BaselineConfig.from_dict(d.get("baselines")),
        ).with_seed(seed)

    def with_seed(self, seed: int) -> "RunConfig":
        bl = self.baselines
        return dataclasses.replace(
            self,
            seed=seed,
            generate=dataclasses.replace(self.generate, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            baselines=BaselineConfig(bl.knn, dataclasses.replace(bl.rf, seed=seed), dataclasses.replace(bl.svm, seed=seed)),
        )

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "sensors": list(self.sensors),
            "one_sensor": self.one_sensor,
            "models": list(self.models),
            "generate": self.generate.to_dict(),
            "split": dataclasses.asdict(self.split),
            "train": self.train.to_dict(),
            "baselines": self.baselines.to_dict(),
        }
        del d["generate"]["seed"], d["train"]["seed"], d["baselines"]["rf"]["seed"], d["baselines"]["svm"]["seed"]
        return d


def _names(value, what: str) -> tuple[str, ...]:
    if isinstance(value, str):
        value = value.split(",")
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{what} must be a list of names or a comma-separated string")
    out = tuple(v.strip() for v in value if v.strip())
    if len(set(out)) != len(out):
        raise ConfigError(f"{what} lists a name twice: {', '.join(out)}")
    return out


def parse_models(value) -> tuple[str, ...]:
    names = tuple(n.upper() for n in _names(value, "models"))
    bad = [n for n in names if n not in MODELS]
    if bad:
        raise ConfigError(f"unknown model(s) {', '.join(bad)}; choose from {', '.join(m.lower() for m in MODELS)}")
    return tuple(m for m in MODELS if m in names)


def load_run_config(path=None, seed=None, sensors=None, models=None) -> RunConfig:
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    # flags win over the file
    if seed is not None:
        d["seed"] = seed
    if sensors is not None:
        d["sensors"] = sensors
    if models is not None:
        d["models"] = models
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# helpers


def out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ROOT_ENV) or DEFAULT_OUT_ROOT) / command


def prepare_out(path: Path, force: bool) -> Path:
    if path.exists() and not path.is_dir():
        raise CliError(f"{path} exists and is not a directory")
    if path.is_dir() and any(path.iterdir()) and not force:
        raise CliError(f"{path} is not empty; pass --force to write into it anyway")
    path.mkdir(parents=True, exist_ok=True)
    return path


def class_summary(ds: Dataset) -> str:
    counts = ds.class_counts()
    hist = " ".join(f"{g.name}:{counts.get(g, 0)}" for g in GasLabel)
    return f"{len(ds)} samples ({hist})"


def setting_name(n_channels: int) -> str:
    return "two-sensor" if n_channels >= 2 else "one-sensor"


def make_plans(ds: Dataset, cfg: RunConfig):
    split = dataset.stratified_split(ds, cfg.split.test_fraction, cfg.seed)
    folds = dataset.make_folds(split, ds, cfg.split.folds, cfg.seed)
    return split, folds


def features_of(ds: Dataset) -> tuple[dict, dict]:
    feats = {s.id: wavelet.extract_features(s) for s in ds}
    labels = {s.id: int(s.label) for s in ds}
    return feats, labels


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def _jobs(args) -> int:
    return max(1, args.jobs if args.jobs else (os.cpu_count() or 1))


def projected_seconds(timing: dict, workers: int) -> float:
    """Wall time a bench run would take with ``workers`` parallel fold slots.

    Uses the measured per-fold seconds from ``timing.json``: the serial part
    (everything outside the fold pool) plus a longest-first greedy schedule
    of the folds. Only meaningful when the run used ``jobs == 1``.
    """
    folds = sorted((d for ds in timing["gru_fold_seconds"].values() for d in ds), reverse=True)
    serial = timing["total_seconds"] - sum(folds)
    slots = [0.0] * max(1, workers)
    for d in folds:
        slots[slots.index(min(slots))] += d
    return serial + max(slots)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out = prepare_out(out_dir(args, "data"), args.force)
    ds = simgen.generate_dataset(cfg.generate)
    manifest = simgen.write_dataset(ds, out)
    print(f"wrote {manifest}")
    print(class_summary(ds))
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.seed, args.sensors)
    if not args.data:
        raise CliError("train needs --data (a directory written by 'generate')")
    ds = dataset.select_channels(dataset.load_dataset(args.data), cfg.sensors)
    out = prepare_out(out_dir(args, "train"), args.force)
    print(class_summary(ds) + f" using {', '.join(cfg.sensors)}")
    split, folds = make_plans(ds, cfg)
    feats, labels = features_of(ds)
    cv = training.run_cv(feats, labels, split.trainval_ids, folds, cfg.train, _jobs(args))
    write_json(out / "config.json", cfg.to_dict())
    dataset.save_plans(out / "split.json", split, folds)
    training.write_curves(cv.curves, out / "curves.csv")
    training.save_checkpoint(cv.selected, out / "checkpoint.json")
    for ck in cv.fold_checkpoints:
        print(f"fold {ck.fold}: best val accuracy {ck.val_accuracy:.4f} at epoch {ck.epoch}")
    print(f"selected fold {cv.selected.fold}, epoch {cv.selected.epoch}; wrote {out / 'checkpoint.json'}")
    return 0


def cmd_evaluate(args) -> int:
    if not args.checkpoint:
        raise CliError("evaluate needs --checkpoint (checkpoint.json written by 'train')")
    if not args.data:
        raise CliError("evaluate needs --data (the dataset the checkpoint was trained on)")
    ckpt_path = Path(args.checkpoint)
    split_path = ckpt_path.parent / "split.json"
    if not split_path.exists():
        raise CliError(f"{split_path} not found; run 'train' first (it writes split.json next to the checkpoint)")
    out = Path(args.out) if args.out else ckpt_path.parent
    if (out / "report.csv").exists() and not args.force:
        raise CliError(f"{out / 'report.csv'} exists; pass --force to overwrite")
    ckpt = training.load_checkpoint(ckpt_path)
    split, _ = dataset.load_plans(split_path)
    sensors = tuple(dict.fromkeys(c.split(":")[0] for c in ckpt.channels))
    ds = dataset.load_dataset(args.data)
    if sensors:
        ds = dataset.select_channels(ds, sensors)
    test = ds.subset(split.test_ids)
    feats = [wavelet.extract_features(s) for s in test]
    report = metrics.evaluate_model(ckpt, feats, [int(s.label) for s in test], "GRU", setting_name(len(sensors) or 2))
    out.mkdir(parents=True, exist_ok=True)
    csv_path, _ = metrics.write_reports([report], out)
    print(report.summary())
    print(f"wrote {csv_path}")
    return 0


def bench_settings(cfg: RunConfig, ds: Dataset) -> dict[str, tuple[str, ...]]:
    if len(ds.channel_names) < 2:
        raise CliError(f"bench needs a two-channel dataset, got {', '.join(ds.channel_names)}")
    if cfg.one_sensor not in ds.channel_names:
        raise CliError(f"one_sensor {cfg.one_sensor!r} is not a dataset channel ({', '.join(ds.channel_names)})")
    return {"two-sensor": tuple(ds.channel_names), "one-sensor": (cfg.one_sensor,)}


def cmd_bench(args) -> int:
    t_start = time.perf_counter()
    cfg = load_run_config(args.config, args.seed, models=args.models)
    if args.data:
        full = dataset.load_dataset(args.data)
    else:
        full = simgen.generate_dataset(cfg.generate)
    settings = bench_settings(cfg, full)
    out = prepare_out(out_dir(args, "bench"), args.force)
    print(class_summary(full))
    split, folds = make_plans(full, cfg)
    write_json(out / "config.json", cfg.to_dict())
    dataset.save_plans(out / "split.json", split, folds)

    data = {}
    for name, channels in settings.items():
        data[name] = features_of(dataset.select_channels(full, channels))

    # all GRU folds of both settings share one worker pool
    outcomes, durations = {}, {}
    if "GRU" in cfg.models:
        tasks, owner = [], []
        for name in settings:
            feats, labels = data[name]
            for t in training.fold_tasks(feats, labels, split.trainval_ids, folds, cfg.train):
                tasks.append(t)
                owner.append(name)
        timings: list[float] = []
        results = training.run_tasks(tasks, _jobs(args), timings)
        for name in settings:
            mine = [r for r, o in zip(results, owner) if o == name]
            outcomes[name] = training.collect(mine)
            durations[name] = [d for d, o in zip(timings, owner) if o == name]

    reports, fold_rows = [], ["setting,fold,epoch,val_accuracy,test_accuracy"]
    for name in settings:
        feats, labels = data[name]
        test_x = [feats[i] for i in split.test_ids]
        test_y = [labels[i] for i in split.test_ids]
        for model in cfg.models:
            if model == "GRU":
                cv = outcomes[name]
                sub = out / name
                sub.mkdir(exist_ok=True)
                training.write_curves(cv.curves, sub / "curves.csv")
                training.save_checkpoint(cv.selected, sub / "checkpoint.json")
                for ck in cv.fold_checkpoints:
                    acc = float(np.mean(ck.predict(test_x) == np.asarray(test_y)))
                    fold_rows.append(f"{name},{ck.fold},{ck.epoch},{ck.val_accuracy:.4f},{acc:.4f}")
                classifier = cv.selected
            else:
                classifier = fit_baseline(model, [feats[i] for i in split.trainval_ids],
                                          [labels[i] for i in split.trainval_ids], cfg.baselines)
            reports.append(metrics.evaluate_model(classifier, test_x, test_y, model, name))

    metrics.write_reports(reports, out)
    table = metrics.comparison_table(reports)
    (out / "table.csv").write_text(table.to_csv())
    (out / "table.txt").write_text(table.to_text())
    if len(fold_rows) > 1:
        (out / "folds.csv").write_text("\n".join(fold_rows) + "\n")
    elapsed = time.perf_counter() - t_start
    write_json(out / "timing.json", {"jobs": _jobs(args), "total_seconds": elapsed, "gru_fold_seconds": durations})
    print(table.to_text(), end="")
    print(f"bench finished in {elapsed:.1f} s; wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasgru", description="Gas classification with wavelet features and a GRU.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON run config")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ROOT_ENV}/<command>)")
        sp.add_argument("--force", action="store_true", help="write into a non-empty output directory")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    common(g)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="cross-validate the GRU and save the selected checkpoint")
    common(t)
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--sensors", help="comma-separated channels, e.g. TGS2611")
    t.add_argument("--jobs", type=int, help="folds trained in parallel (default: CPU count)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on its held-out test ids")
    e.add_argument("--checkpoint", help="checkpoint.json written by train")
    e.add_argument("--data", help="dataset directory")
    e.add_argument("--out", help="report directory (default: the checkpoint's directory)")
    e.add_argument("--force", action="store_true", help="overwrite an existing report")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="GRU and baselines on two-sensor and one-sensor data")
    common(b)
    b.add_argument("--data", help="dataset directory (default: generate from the config)")
    b.add_argument("--models", help="comma-separated subset of gru,svm,rf,knn")
    b.add_argument("--jobs", type=int, help="folds trained in parallel (default: CPU count)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (CliError, DatasetError, ShapeError, training.CheckpointError, training.TrainingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
