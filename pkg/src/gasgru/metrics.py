"""Confusion matrices, support-weighted precision/recall/F1 and the comparison table."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import GasLabel

CLASS_NAMES = tuple(g.name for g in GasLabel)
N_CLASSES = len(CLASS_NAMES)
SETTINGS = ("two-sensor", "one-sensor")
SETTING_TITLES = {"two-sensor": "Two Sensors", "one-sensor": "One Sensor"}
MODEL_ORDER = ("GRU", "SVM", "RF", "KNN")
MISSING = "—"


def confusion(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """counts[i, j] = number of samples with true class i predicted as j."""
    t = np.asarray(y_true, dtype=np.int64).ravel()
    p = np.asarray(y_pred, dtype=np.int64).ravel()
    if t.size != p.size:
        raise ValueError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    if t.size == 0:
        raise ValueError("need at least one sample")
    for name, v in (("true", t), ("predicted", p)):
        if v.min() < 0 or v.max() >= n_classes:
            raise ValueError(f"{name} label out of range 0..{n_classes - 1}")
    return np.bincount(t * n_classes + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    precision_w: float
    recall_w: float
    f1_w: float
    confusion: np.ndarray
    model: str = ""
    setting: str = ""
    warnings: list[str] = field(default_factory=list)

    def row(self) -> dict[str, str]:
        out = {
            "model": self.model,
            "setting": self.setting,
            "accuracy": f"{self.accuracy:.4f}",
            "precision_w": f"{self.precision_w:.4f}",
            "recall_w": f"{self.recall_w:.4f}",
            "f1_w": f"{self.f1_w:.4f}",
        }
        for i, c in enumerate(CLASS_NAMES):
            out[f"precision_{c}"] = f"{self.precision[i]:.4f}"
            out[f"recall_{c}"] = f"{self.recall[i]:.4f}"
            out[f"f1_{c}"] = f"{self.f1[i]:.4f}"
            out[f"support_{c}"] = str(int(self.support[i]))
        for i, a in enumerate(CLASS_NAMES):
            for j, b in enumerate(CLASS_NAMES):
                out[f"cm_{a}_{b}"] = str(int(self.confusion[i, j]))
        return out

    def summary(self) -> str:
        lines = [
            f"{self.model} [{self.setting}]  accuracy {self.accuracy:.4f}  "
            f"P_w {self.precision_w:.4f}  R_w {self.recall_w:.4f}  F1_w {self.f1_w:.4f}",
            "  class   precision  recall  f1      support",
        ]
        for i, c in enumerate(CLASS_NAMES):
            lines.append(
                f"  {c:<6}  {self.precision[i]:.4f}     {self.recall[i]:.4f}  {self.f1[i]:.4f}  {int(self.support[i])}"
            )
        lines.append("  confusion (rows true, cols predicted: " + " ".join(CLASS_NAMES) + ")")
        for i, c in enumerate(CLASS_NAMES):
            lines.append(f"  {c:<6}  " + " ".join(f"{int(v):4d}" for v in self.confusion[i]))
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def metrics(cm, model: str = "", setting: str = "") -> EvalReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix is all zeros")
    n = cm.shape[0]
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = np.zeros(n)
    recall = np.zeros(n)
    f1 = np.zeros(n)
    warnings = []
    for i in range(n):
        name = CLASS_NAMES[i] if i < len(CLASS_NAMES) else str(i)
        if predicted[i]:
            precision[i] = tp[i] / predicted[i]
        else:
            warnings.append(f"precision of {name} set to 0 (never predicted)")
        if support[i]:
            recall[i] = tp[i] / support[i]
        else:
            warnings.append(f"recall of {name} set to 0 (no true samples)")
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
    s = support.astype(np.float64)
    return EvalReport(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        precision_w=float((s * precision).sum() / s.sum()),
        recall_w=float((s * recall).sum() / s.sum()),
        f1_w=float((s * f1).sum() / s.sum()),
        confusion=cm,
        model=model,
        setting=setting,
        warnings=warnings,
    )


def evaluate_model(model, features, labels, name: str = "", setting: str = "") -> EvalReport:
    """``model`` is anything with ``predict(list[FeatureSequence]) -> labels``."""
    pred = model.predict(list(features))
    return metrics(confusion(labels, pred), name, setting)


# ---------------------------------------------------------------------------
# reports


def report_columns() -> list[str]:
    dummy = metrics(np.eye(N_CLASSES, dtype=np.int64))
    return list(dummy.row())


def write_reports(reports: list[EvalReport], out_dir, stem: str = "report") -> tuple[Path, Path]:
    out = Path(out_dir)
    cols = report_columns()
    lines = [",".join(cols)] + [",".join(r.row()[c] for c in cols) for r in reports]
    csv_path = out / f"{stem}.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    txt_path = out / f"{stem}.txt"
    txt_path.write_text("\n\n".join(r.summary() for r in reports) + "\n")
    return csv_path, txt_path


@dataclass
class ComparisonTable:
    models: list[str]
    settings: list[str]
    cells: dict[tuple[str, str], EvalReport]

    METRICS = ("Accuracy", "Precision", "Recall", "F1")

    def _values(self, model: str, setting: str) -> list[str]:
        r = self.cells.get((model, setting))
        if r is None:
            return [MISSING] * 4
        return [f"{v:.4f}" for v in (r.accuracy, r.precision_w, r.recall_w, r.f1_w)]

    def rows(self) -> list[list[str]]:
        return [[m] + [v for s in self.settings for v in self._values(m, s)] for m in self.models]

    def to_csv(self) -> str:
        header = ["model"] + [f"{s}:{k.lower()}" for s in self.settings for k in self.METRICS]
        return "\n".join(",".join(r) for r in [header] + self.rows()) + "\n"

    def to_text(self) -> str:
        w = 10
        groups = "".join(f"{SETTING_TITLES.get(s, s):^{4 * w}}" for s in self.settings)
        lines = [f"{'Models':<8}" + groups, f"{'':<8}" + "".join(f"{k:>{w}}" for _ in self.settings for k in self.METRICS)]
        lines.append("-" * len(lines[1]))
        lines += [f"{r[0]:<8}" + "".join(f"{v:>{w}}" for v in r[1:]) for r in self.rows()]
        return "\n".join(lines) + "\n"


def comparison_table(reports: list[EvalReport]) -> ComparisonTable:
    cells: dict[tuple[str, str], EvalReport] = {}
    for r in reports:
        key = (r.model, r.setting)
        if key in cells:
            raise ValueError(f"duplicate report for model {r.model!r}, setting {r.setting!r}")
        cells[key] = r
    models = [m for m in MODEL_ORDER if any(k[0] == m for k in cells)]
    models += sorted({k[0] for k in cells} - set(models))
    present = {k[1] for k in cells}
    settings = [s for s in SETTINGS if s in present] + sorted(present - set(SETTINGS))
    if len(settings) == 1 and settings[0] in SETTINGS:
        # keep both column groups so a missing setting renders as blanks
        settings = list(SETTINGS)
    return ComparisonTable(models, settings, cells)
