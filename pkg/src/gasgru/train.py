"""Mini-batch training, step-decay learning rate, k-fold CV and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from ._rng import make_rng
from .config import from_dict
from .wavelet import FeatureSequence, Standardizer, fit_standardizer

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 24
    lr0: float = 0.0005
    decay_factor: float = 0.5
    decay_every: int = 20
    epochs: int = 100
    dropout_rate: float = 0.2
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    attention_slots: int = 500
    gru_hidden: int = 8
    gru_layers: int = 3
    decoder_hidden: int = 16

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        if self.decay_every < 1 or self.epochs < 1:
            raise ValueError("decay_every and epochs must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return from_dict(cls, d, "train")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dims(self, n_inputs: int) -> nn.ModelDims:
        return nn.ModelDims(n_inputs, self.attention_slots, self.gru_hidden, self.gru_layers, self.decoder_hidden)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


# ---------------------------------------------------------------------------
# optimisers


class Adam:
    def __init__(self, params: nn.ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: nn.ModelParams, grads: nn.Gradients, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for (_, p), (_, g), (_, m), (_, v) in zip(
            params.named_arrays(), grads.named_arrays(), self.m.named_arrays(), self.v.named_arrays()
        ):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        params.version += 1


class SGD:
    def __init__(self, params: nn.ModelParams):
        pass

    def step(self, params: nn.ModelParams, grads: nn.Gradients, lr: float) -> None:
        for (_, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
            p -= lr * g
        params.version += 1


def make_optimizer(cfg: TrainConfig, params: nn.ModelParams):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return SGD(params)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: nn.ModelParams
    standardizer: Standardizer
    config: dict
    fold: int
    epoch: int
    val_accuracy: float
    channels: tuple[str, ...] = ()

    @property
    def n_inputs(self) -> int:
        return self.params.attention.M_k.shape[1]

    def stack(self, features: list[FeatureSequence]) -> np.ndarray:
        for fs in features:
            if fs.values.shape[1] != self.n_inputs:
                raise nn.ShapeError(
                    f"checkpoint expects D={self.n_inputs} feature channels "
                    f"({', '.join(self.channels) or 'unnamed'}), data has D={fs.values.shape[1]}"
                )
        return np.stack([(fs.values - self.standardizer.mean) / self.standardizer.std for fs in features])

    def predict_logits(self, features: list[FeatureSequence]) -> np.ndarray:
        return nn.predict_logits(self.params, self.stack(features))

    def predict(self, features: list[FeatureSequence]) -> np.ndarray:
        return nn.argmax_first(self.predict_logits(features))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "dims": dataclasses.asdict(self.params.dims),
            "dropout_rate": self.params.dropout_rate,
            "arrays": {
                name: {"shape": list(a.shape), "data": a.reshape(-1).tolist()} for name, a in self.params.named_arrays()
            },
            "standardizer": self.standardizer.to_dict(),
            "config": self.config,
            "fold": self.fold,
            "epoch": self.epoch,
            "val_accuracy": self.val_accuracy,
            "channels": list(self.channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise CheckpointError(f"checkpoint schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}")
        try:
            dims = nn.ModelDims(**d["dims"])
            arrays = {}
            for name, entry in d["arrays"].items():
                shape = tuple(entry["shape"])
                data = np.asarray(entry["data"], dtype=np.float64)
                if data.size != math.prod(shape):
                    raise CheckpointError(f"{name}: {data.size} values for shape {shape}")
                arrays[name] = data.reshape(shape)
            params = nn.params_from_arrays(dims, arrays, d["dropout_rate"])
            std = Standardizer.from_dict(d["standardizer"])
        except (KeyError, TypeError) as e:
            raise CheckpointError(f"checkpoint missing or malformed field: {e}") from None
        except (nn.ShapeError, ValueError) as e:
            raise CheckpointError(f"inconsistent checkpoint: {e}") from None
        if std.mean.size != dims.n_inputs:
            raise CheckpointError(f"standardizer width {std.mean.size} does not match model input {dims.n_inputs}")
        return cls(params, std, d.get("config", {}), int(d["fold"]), int(d["epoch"]), float(d["val_accuracy"]),
                   tuple(d.get("channels", ())))


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(ckpt.to_dict(), sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise CheckpointError(f"{path}: cannot read checkpoint ({e.strerror})") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: checkpoint parse error ({e})") from None
    return Checkpoint.from_dict(d)


# ---------------------------------------------------------------------------
# training


@dataclass
class CurveRow:
    fold: int
    epoch: int
    lr: float
    train_loss: float
    val_accuracy: float


def _standardized(std: Standardizer, feats: list[FeatureSequence]) -> np.ndarray:
    return np.stack([(f.values - std.mean) / std.std for f in feats])


def train_fold(
    train_feats: list[FeatureSequence],
    train_labels,
    val_feats: list[FeatureSequence],
    val_labels,
    cfg: TrainConfig,
    fold: int = 0,
) -> tuple[Checkpoint, list[CurveRow]]:
    """Train one fold; keep the snapshot with the best validation accuracy (earliest on ties)."""
    if not train_feats or not val_feats:
        raise TrainingError("train and validation sets must be non-empty")
    ids_t = {f.sample_id for f in train_feats if f.sample_id}
    if ids_t & {f.sample_id for f in val_feats if f.sample_id}:
        raise TrainingError("train and validation sets overlap")
    std = fit_standardizer(train_feats)
    Xtr = _standardized(std, train_feats)
    Xva = _standardized(std, val_feats)
    ytr = np.asarray(train_labels, dtype=np.int64)
    yva = np.asarray(val_labels, dtype=np.int64)

    params = nn.init_params(cfg.dims(Xtr.shape[2]), cfg.seed, cfg.dropout_rate, stream=fold)
    opt = make_optimizer(cfg, params)
    channels = train_feats[0].channels
    best: Checkpoint | None = None
    curves = []
    n = len(ytr)
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg, epoch)
        order = make_rng(cfg.seed, 30, fold, epoch).permutation(n)
        drop_rng = make_rng(cfg.seed, 31, fold, epoch)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            logits, cache = nn.forward_batch(Xtr[idx], params, train=True, rng=drop_rng)
            loss, dlogits = nn.batch_cross_entropy(logits, ytr[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at fold {fold}, epoch {epoch}, batch {bi}")
            opt.step(params, nn.backward_batch(cache, dlogits), lr)
            total += loss * len(idx)
        acc = float(np.mean(nn.argmax_first(nn.predict_logits(params, Xva)) == yva))
        curves.append(CurveRow(fold, epoch, lr, total / n, acc))
        log.info("fold %d epoch %3d lr %.2e loss %.4f val_acc %.4f", fold, epoch, lr, total / n, acc)
        if best is None or acc > best.val_accuracy:
            best = Checkpoint(params.copy(), std, cfg.to_dict(), fold, epoch, acc, channels)
    return best, curves


@dataclass
class CvOutcome:
    fold_checkpoints: list[Checkpoint]
    selected: Checkpoint
    curves: list[CurveRow] = field(default_factory=list)

    @property
    def fold_best_accuracies(self) -> list[float]:
        return [c.val_accuracy for c in self.fold_checkpoints]


def select_best(checkpoints: list[Checkpoint]) -> Checkpoint:
    """Highest validation accuracy; ties go to the earliest epoch, then the lowest fold."""
    return min(checkpoints, key=lambda c: (-c.val_accuracy, c.epoch, c.fold))


@dataclass
class FoldTask:
    """Everything one fold needs; independent of every other fold."""

    train_feats: list
    train_labels: list
    val_feats: list
    val_labels: list
    cfg: TrainConfig
    fold: int

    def run(self) -> tuple[Checkpoint, list[CurveRow]]:
        return train_fold(self.train_feats, self.train_labels, self.val_feats, self.val_labels, self.cfg, self.fold)


def fold_tasks(features, labels, trainval_ids, folds, cfg: TrainConfig) -> list[FoldTask]:
    tasks = []
    for k, val_ids in enumerate(folds.folds):
        tr = folds.train_ids(k, trainval_ids)
        tasks.append(FoldTask(
            [features[i] for i in tr], [labels[i] for i in tr],
            [features[i] for i in val_ids], [labels[i] for i in val_ids],
            cfg, k,
        ))
    return tasks


def run_tasks(tasks: list[FoldTask], jobs: int = 1, timings: list | None = None):
    """Run fold tasks, ``jobs`` at a time; results come back in task order.

    Threads suffice: the numeric kernels release the GIL, and every fold owns
    its parameters and RNG streams, so results do not depend on ``jobs``.
    Wall-clock seconds per task are appended to ``timings`` when given.
    """

    def timed(task):
        t0 = time.perf_counter()
        result = task.run()
        return result, time.perf_counter() - t0

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            out = list(pool.map(timed, tasks))
    else:
        out = [timed(t) for t in tasks]
    if timings is not None:
        timings.extend(d for _, d in out)
    return [r for r, _ in out]


def collect(results: list[tuple[Checkpoint, list[CurveRow]]]) -> CvOutcome:
    ckpts = [r[0] for r in results]
    return CvOutcome(ckpts, select_best(ckpts), [row for r in results for row in r[1]])


def run_cv(
    features: dict[str, FeatureSequence],
    labels: dict[str, int],
    trainval_ids,
    folds,
    cfg: TrainConfig,
    jobs: int = 1,
) -> CvOutcome:
    """Train one model per fold of ``folds`` (a FoldPlan) and select the global best."""
    return collect(run_tasks(fold_tasks(features, labels, trainval_ids, folds, cfg), jobs))


def write_curves(rows: list[CurveRow], path) -> Path:
    path = Path(path)
    lines = ["fold,epoch,lr,train_loss,val_accuracy"]
    lines += [f"{r.fold},{r.epoch},{r.lr!r},{r.train_loss!r},{r.val_accuracy!r}" for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
