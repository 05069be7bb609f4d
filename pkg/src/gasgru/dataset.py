"""Samples, the on-disk dataset format, stratified splitting and CV folds.

On disk a dataset is a directory holding ``manifest.csv`` (``id,label,h2_ppm,
co_ppm,path``) plus one CSV per sample with header ``t,<channel>[,<channel>]``
and exactly :data:`N_NODES` rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from ._rng import make_rng

N_NODES = 2000
DT = 0.1
MANIFEST = "manifest.csv"
MANIFEST_HEADER = ["id", "label", "h2_ppm", "co_ppm", "path"]
DEFAULT_CHANNELS = ("TGS813", "TGS2611")


class DatasetError(ValueError):
    pass


class GasLabel(IntEnum):
    H2 = 0
    CO = 1
    MIX = 2

    @classmethod
    def parse(cls, text: str) -> "GasLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DatasetError(f"unknown label {text!r}; expected one of H2, CO, MIX") from None


N_CLASSES = len(GasLabel)


@dataclass(frozen=True, eq=False)
class Sample:
    id: str
    label: GasLabel
    h2_ppm: float
    co_ppm: float
    readings: np.ndarray  # (T, C)
    dt: float = DT
    channels: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        r = np.asarray(self.readings, dtype=np.float64)
        if r.ndim != 2:
            raise DatasetError(f"sample {self.id}: readings must be T x C, got shape {r.shape}")
        if r.shape[0] != N_NODES:
            raise DatasetError(f"sample {self.id}: expected {N_NODES} nodes, got {r.shape[0]}")
        if r.shape[1] not in (1, 2):
            raise DatasetError(f"sample {self.id}: expected 1 or 2 channels, got {r.shape[1]}")
        if not np.isfinite(r).all():
            raise DatasetError(f"sample {self.id}: non-finite reading")
        if self.channels and len(self.channels) != r.shape[1]:
            raise DatasetError(f"sample {self.id}: {len(self.channels)} channel names for {r.shape[1]} columns")
        label = GasLabel(self.label)
        if self.h2_ppm < 0 or self.co_ppm < 0:
            raise DatasetError(f"sample {self.id}: negative concentration")
        if (self.h2_ppm == 0) != (label == GasLabel.CO) or (self.co_ppm == 0) != (label == GasLabel.H2):
            raise DatasetError(
                f"sample {self.id}: concentrations (h2={self.h2_ppm}, co={self.co_ppm}) inconsistent with {label.name}"
            )
        r.setflags(write=False)
        object.__setattr__(self, "readings", r)
        object.__setattr__(self, "label", label)

    @property
    def n_nodes(self) -> int:
        return self.readings.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            (self.id, self.label, self.h2_ppm, self.co_ppm, self.dt, self.channels)
            == (other.id, other.label, other.h2_ppm, other.co_ppm, other.dt, other.channels)
            and np.array_equal(self.readings, other.readings)
        )


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    channel_names: tuple[str, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        names = tuple(self.channel_names)
        ids = [s.id for s in samples]
        if len(set(ids)) != len(ids):
            dup = [k for k, v in Counter(ids).items() if v > 1]
            raise DatasetError(f"duplicate sample ids: {dup[:5]}")
        for s in samples:
            if s.readings.shape[1] != len(names):
                raise DatasetError(f"sample {s.id} has {s.readings.shape[1]} channels, dataset has {len(names)}")
            if s.dt != samples[0].dt:
                raise DatasetError(f"sample {s.id} has dt={s.dt}, expected {samples[0].dt}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_names", names)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def class_counts(self) -> dict[GasLabel, int]:
        counts = Counter(s.label for s in self.samples)
        return {g: counts.get(g, 0) for g in GasLabel}

    def subset(self, ids) -> "Dataset":
        index = {s.id: s for s in self.samples}
        try:
            return Dataset(tuple(index[i] for i in ids), self.channel_names)
        except KeyError as e:
            raise DatasetError(f"unknown sample id {e.args[0]!r}") from None


@dataclass(frozen=True)
class SplitPlan:
    trainval_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[str, ...], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_ids(self, fold: int, trainval_ids) -> list[str]:
        held = set(self.folds[fold])
        return [i for i in trainval_ids if i not in held]


# ---------------------------------------------------------------------------
# loading


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DatasetError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise DatasetError(f"{where}: non-finite value {text!r}")
    return v


def _read_sample_csv(path: Path) -> tuple[tuple[str, ...], np.ndarray, float]:
    try:
        text = path.read_text()
    except OSError as e:
        raise DatasetError(f"{path}: cannot read sample file ({e.strerror})") from None
    lines = text.splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2 or header[0] != "t":
        raise DatasetError(f"{path}:1: header must be 't,<channel>[,<channel>]', got {lines[0]!r}")
    width = len(header)
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != N_NODES:
        raise DatasetError(f"{path}: expected {N_NODES} data rows, found {len(rows)}")
    try:
        data = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2)
        ok = data.shape == (N_NODES, width) and np.isfinite(data).all()
    except ValueError:
        ok = False
    if not ok:
        # slow path, only to pinpoint the offending line
        for lineno, ln in enumerate(lines[1:], start=2):
            if not ln.strip():
                continue
            cells = ln.split(",")
            if len(cells) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} columns, found {len(cells)}")
            for c in cells:
                _parse_float(c, f"{path}:{lineno}")
        raise DatasetError(f"{path}: malformed CSV")
    t = data[:, 0]
    steps = np.diff(t)
    dt = round(float(t[-1] - t[0]) / (N_NODES - 1), 9)
    if t[0] != 0.0 or dt <= 0 or np.abs(steps - dt).max() > 1e-6:
        raise DatasetError(f"{path}: time column must start at 0 with a constant step")
    return tuple(header[1:]), data[:, 1:].copy(), dt


def load_dataset(root_dir) -> Dataset:
    root = Path(root_dir)
    manifest = root / MANIFEST
    try:
        text = manifest.read_text()
    except OSError as e:
        raise DatasetError(f"{manifest}: cannot read manifest ({e.strerror})") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != MANIFEST_HEADER:
        raise DatasetError(f"{manifest}:1: header must be {','.join(MANIFEST_HEADER)}")
    samples = []
    channels = None
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        where = f"{manifest}:{lineno}"
        if len(row) != len(MANIFEST_HEADER):
            raise DatasetError(f"{where}: expected {len(MANIFEST_HEADER)} fields, found {len(row)}")
        sid, label, h2, co, rel = (c.strip() for c in row)
        try:
            label = GasLabel.parse(label)
        except DatasetError as e:
            raise DatasetError(f"{where}: {e}") from None
        h2 = _parse_float(h2, where)
        co = _parse_float(co, where)
        names, readings, dt = _read_sample_csv(root / rel)
        if channels is None:
            channels = names
        elif names != channels:
            raise DatasetError(f"{root / rel}:1: channels {names} differ from {channels}")
        try:
            samples.append(Sample(sid, label, h2, co, readings, dt, names))
        except DatasetError as e:
            raise DatasetError(f"{where}: {e}") from None
    if not samples:
        raise DatasetError("empty dataset")
    return Dataset(tuple(samples), channels)


# ---------------------------------------------------------------------------
# splitting


def _ids_by_class(samples) -> dict[GasLabel, list[str]]:
    out: dict[GasLabel, list[str]] = {}
    for s in samples:
        out.setdefault(s.label, []).append(s.id)
    return dict(sorted(out.items()))


def stratified_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> SplitPlan:
    """Per-class seeded split; ``round(n_c * test_fraction)`` (half up) ids per class go to test."""
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    test = set()
    for label, ids in _ids_by_class(ds.samples).items():
        n_test = math.floor(len(ids) * test_fraction + 0.5)
        if len(ids) < 2 or n_test == 0 or n_test >= len(ids):
            raise DatasetError(
                f"class {label.name} has {len(ids)} samples, too few for a test fraction of {test_fraction}"
            )
        perm = make_rng(seed, 1, int(label)).permutation(len(ids))
        test.update(ids[i] for i in perm[:n_test])
    order = ds.ids
    return SplitPlan(
        tuple(i for i in order if i not in test),
        tuple(i for i in order if i in test),
        int(seed),
    )


def make_folds(split: SplitPlan, ds: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k folds over the train/validation ids.

    Each class is shuffled and dealt round-robin; the dealing position carries
    over between classes so fold sizes stay within one of each other too.
    """
    if k < 2:
        raise DatasetError(f"need at least 2 folds, got {k}")
    members = set(split.trainval_ids)
    by_class = _ids_by_class(s for s in ds.samples if s.id in members)
    folds: list[set[str]] = [set() for _ in range(k)]
    pos = 0
    for label, ids in by_class.items():
        if len(ids) < k:
            raise DatasetError(f"class {label.name} has {len(ids)} train/validation samples, fewer than k={k}")
        perm = make_rng(seed, 2, int(label)).permutation(len(ids))
        for i in perm:
            folds[pos % k].add(ids[i])
            pos += 1
    return FoldPlan(tuple(tuple(i for i in split.trainval_ids if i in f) for f in folds), int(seed))


def select_channels(ds: Dataset, names) -> Dataset:
    names = tuple(names)
    missing = [n for n in names if n not in ds.channel_names]
    if missing or not names:
        raise DatasetError(f"unknown channel(s) {missing}; available: {', '.join(ds.channel_names)}")
    cols = [ds.channel_names.index(n) for n in names]
    samples = tuple(
        Sample(s.id, s.label, s.h2_ppm, s.co_ppm, s.readings[:, cols], s.dt, names) for s in ds.samples
    )
    return Dataset(samples, names)


# ---------------------------------------------------------------------------
# plan serialisation


def plans_to_dict(split: SplitPlan, folds: FoldPlan | None = None) -> dict:
    d = {"seed": split.seed, "trainval_ids": list(split.trainval_ids), "test_ids": list(split.test_ids)}
    if folds is not None:
        d["fold_seed"] = folds.seed
        d["folds"] = [list(f) for f in folds.folds]
    return d


def save_plans(path, split: SplitPlan, folds: FoldPlan | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(plans_to_dict(split, folds), indent=1) + "\n")
    return path


def load_plans(path) -> tuple[SplitPlan, FoldPlan | None]:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as e:
        raise DatasetError(f"{path}: cannot read split file ({e.strerror})") from None
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON ({e})") from None
    split = SplitPlan(tuple(d["trainval_ids"]), tuple(d["test_ids"]), int(d["seed"]))
    folds = None
    if "folds" in d:
        folds = FoldPlan(tuple(tuple(f) for f in d["folds"]), int(d["fold_seed"]))
    return split, folds
