"""Prediction, confusion matrices and precision/recall/F1 reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .errors import DegenerateInput, ShapeMismatch, UnknownClass
from .ingest import load_recordings, scan_dataset
from .model import predict_proba
from .preprocessing import Window, apply_normalizer, segment

AVERAGING = ("weighted", "macro", "micro")
DENSITY = " .:-=+*#%@"


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[true, predicted]."""
    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeMismatch(f"confusion counts must be square, got {c.shape}")
        if self.class_names and len(self.class_names) != c.shape[0]:
            raise ShapeMismatch("class_names length does not match the matrix")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise DegenerateInput("empty confusion matrix")
        return float(np.trace(self.counts) / self.total)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str
    per_class_precision: np.ndarray = field(repr=False)
    per_class_recall: np.ndarray = field(repr=False)
    per_class_f1: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)


def _window_array(window):
    return window.data if isinstance(window, Window) else np.asarray(window, dtype=np.float64)


def predict_windows(ckpt: Checkpoint, data, batch_size=512):
    """Labels and probabilities for raw windows ``data[N, W, C]``."""
    data = np.asarray(data, dtype=np.float64)
    cfg = ckpt.model_config
    if data.ndim != 3 or data.shape[1:] != (cfg.input_len, cfg.channels):
        raise ShapeMismatch(
            f"windows {data.shape} do not match [N, W={cfg.input_len}, C={cfg.channels}]")
    x = np.swapaxes(apply_normalizer(data, ckpt.normalizer), 1, 2)
    probs = predict_proba(ckpt.params, x, cfg, batch_size)
    return probs.argmax(axis=1), probs


def predict(ckpt: Checkpoint, window):
    """(class index, probability vector) for one raw ``[W, C]`` window."""
    labels, probs = predict_windows(ckpt, _window_array(window)[None])
    return int(labels[0]), probs[0]


def confusion(pred, true, num_classes: int, class_names=()) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ShapeMismatch("prediction and truth lists differ in length")
    for arr in (pred, true):
        bad = arr[(arr < 0) | (arr >= num_classes)]
        if bad.size:
            raise UnknownClass(f"label {int(bad[0])} outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, tuple(class_names))


def _safe_div(num, den):
    num, den = np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics(cm: ConfusionMatrix, averaging: str = "weighted") -> MetricsReport:
    """Aggregate precision/recall/F1.

    ``weighted`` weights each class by its support, ``macro`` is the plain mean
    over all classes (zero-support classes count as 0), ``micro`` pools counts.
    """
    if averaging not in AVERAGING:
        raise ValueError(f"averaging must be one of {AVERAGING}")
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise DegenerateInput("cannot compute metrics on an empty confusion matrix")
    tp = np.diag(c)
    support = c.sum(axis=1)
    precision = _safe_div(tp, c.sum(axis=0))
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    acc = float(tp.sum() / total)
    if averaging == "weighted":
        w = support / total
        p, r, f = (float(np.dot(w, m)) for m in (precision, recall, f1))
    elif averaging == "macro":
        p, r, f = float(precision.mean()), float(recall.mean()), float(f1.mean())
    else:
        # single-label: pooled TP / pooled (TP + FP) = pooled TP / total
        p = r = f = acc
    return MetricsReport(acc, p, r, f, averaging, precision, recall, f1,
                         support.astype(np.int64))


# --- report files ------------------------------------------------------------

def confusion_csv(cm: ConfusionMatrix) -> str:
    names = cm.class_names or tuple(str(i) for i in range(cm.num_classes))
    lines = [",".join(["true\\pred", *names])]
    for name, row in zip(names, cm.counts):
        lines.append(",".join([name, *(str(int(v)) for v in row)]))
    return "\n".join(lines) + "\n"


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(counts.reshape(len(names), len(names)), names)


def metrics_csv(report: MetricsReport, class_names) -> str:
    lines = ["key,value", f"averaging,{report.averaging}"]
    for key in ("accuracy", "precision", "recall", "f1"):
        lines.append(f"{key},{getattr(report, key)!r}")
    for i, name in enumerate(class_names):
        lines.append(f"precision[{name}],{float(report.per_class_precision[i])!r}")
        lines.append(f"recall[{name}],{float(report.per_class_recall[i])!r}")
        lines.append(f"f1[{name}],{float(report.per_class_f1[i])!r}")
        lines.append(f"support[{name}],{int(report.support[i])}")
    return "\n".join(lines) + "\n"


def confusion_text(cm: ConfusionMatrix) -> str:
    """Heat map of row-normalized counts, one density character per cell."""
    names = cm.class_names
    width = max(len(n) for n in names)
    rows = cm.counts.astype(np.float64)
    frac = _safe_div(rows, rows.sum(axis=1, keepdims=True))
    levels = np.minimum((frac * len(DENSITY)).astype(int), len(DENSITY) - 1)
    out = [" " * (width + 3) + "".join(f"{i % 100:>3}" for i in range(len(names)))]
    for i, name in enumerate(names):
        cells = "".join(f"  {DENSITY[lv]}" for lv in levels[i])
        out.append(f"{i:>2} {name:<{width}}{cells}   n={int(cm.counts[i].sum())}")
    out.append("")
    out.append(f"scale: '{DENSITY}' = 0..100% of row; accuracy = {cm.accuracy:.4f}"
               if cm.total else f"scale: '{DENSITY}' = 0..100% of row")
    return "\n".join(out) + "\n"


def render_report(cm: ConfusionMatrix, report: MetricsReport, out_dir) -> list[Path]:
    """Write confusion.csv, metrics.csv and confusion.txt into ``out_dir``."""
    if not cm.class_names:
        raise DegenerateInput("a report needs class names")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "confusion.csv": confusion_csv(cm),
        "metrics.csv": metrics_csv(report, cm.class_names),
        "confusion.txt": confusion_text(cm),
    }
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8", newline="")
        paths.append(p)
    return paths


# --- end-to-end evaluation ---------------------------------------------------

def evaluate_windows(ckpt: Checkpoint, data, labels, averaging="weighted"):
    pred, _ = predict_windows(ckpt, data)
    cm = confusion(pred, labels, ckpt.model_config.num_classes, ckpt.class_names)
    return cm, metrics(cm, averaging)


def majority_vote(labels, num_classes: int) -> int:
    """Most frequent label; ties go to the lowest index."""
    return int(np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).argmax())


def evaluate_directory(ckpt: Checkpoint, data_dir, averaging="weighted", per_trial=False,
                       workers=None):
    """Window every recording under ``data_dir`` like training did, predict, tally.

    With ``per_trial`` each recording contributes one majority-vote prediction
    instead of one prediction per window.
    """
    manifest = scan_dataset(data_dir)
    unknown = [a for a in manifest.class_names if a not in ckpt.class_names]
    if unknown:
        raise UnknownClass(", ".join(unknown))
    index = {name: i for i, name in enumerate(ckpt.class_names)}
    W, K = ckpt.model_config.input_len, ckpt.model_config.num_classes
    preds, trues = [], []
    for rec in load_recordings(manifest, ckpt.repair_policy, workers):
        wins = segment(rec, W, ckpt.stride, index[rec.activity])
        if not wins:
            continue
        pred, _ = predict_windows(ckpt, np.stack([w.data for w in wins]))
        y = index[rec.activity]
        if per_trial:
            preds.append(majority_vote(pred, K))
            trues.append(y)
        else:
            preds.extend(pred.tolist())
            trues.extend([y] * len(pred))
    cm = confusion(preds, trues, K, ckpt.class_names)
    return cm, metrics(cm, averaging)
