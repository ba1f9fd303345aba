"""Windowing, normalization, splitting and one-hot targets."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import substream
from .errors import EmptyDataset, EmptyTrainingSet, ShapeMismatch, UnknownClass
from .ingest import TimeSeriesRecording

DEFAULT_WINDOW = 200
DEFAULT_STRIDE = 100
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Window:
    data: np.ndarray  # [W, C]
    label: int
    subject: str = ""


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray  # [C]
    std: np.ndarray   # [C]

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


def segment(recording: TimeSeriesRecording, window_len: int, stride: int, label: int) -> list[Window]:
    if window_len < 1 or stride < 1:
        raise ValueError("window_len and stride must be >= 1")
    x = recording.samples
    return [Window(x[start:start + window_len], label, recording.subject)
            for start in range(0, x.shape[0] - window_len + 1, stride)]


def window_count(length: int, window_len: int, stride: int) -> int:
    if length < window_len:
        return 0
    return (length - window_len) // stride + 1


def _stack(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        return windows
    return np.stack([w.data if isinstance(w, Window) else w for w in windows])


def fit_normalizer(train_windows) -> Normalizer:
    """Per-channel mean and population stddev over every training sample."""
    if len(train_windows) == 0:
        raise EmptyTrainingSet("cannot fit a normalizer on zero windows")
    x = _stack(train_windows)
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    std = np.sqrt(((flat - mean) ** 2).mean(axis=0))
    return Normalizer(mean, np.maximum(std, STD_FLOOR))


def apply_normalizer(window, normalizer: Normalizer):
    """Z-score a Window, or a raw ``[..., W, C]`` array, channel by channel."""
    data = window.data if isinstance(window, Window) else np.asarray(window)
    if data.shape[-1] != normalizer.channels:
        raise ShapeMismatch(
            f"window has {data.shape[-1]} channels, normalizer has {normalizer.channels}")
    out = (data - normalizer.mean) / normalizer.std
    if isinstance(window, Window):
        return Window(out, window.label, window.subject)
    return out


def split(n, ratio: float = 0.7, seed: int = 0):
    """Seeded random partition of ``range(n)`` into (train, test) index arrays.

    ``n`` may be a count or anything with a length.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = n if isinstance(n, (int, np.integer)) else len(n)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    perm = substream(seed, "split").permutation(n)
    n_train = int(round(ratio * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def one_hot(label, num_classes: int) -> np.ndarray:
    """One-hot row(s) for an integer label or an array of labels."""
    labels = np.asarray(label)
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= num_classes):
        raise UnknownClass(f"label {label!r} outside [0, {num_classes})")
    out = np.zeros(labels.shape + (num_classes,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


@dataclass
class WindowedDataset:
    """Windows stacked as ``data[N, W, C]`` with labels and a train/test split.

    ``data`` holds raw values; ``normalizer`` is fit on the training rows only.
    """
    data: np.ndarray
    labels: np.ndarray
    num_classes: int
    normalizer: Normalizer
    train_idx: np.ndarray
    test_idx: np.ndarray
    subjects: list = field(default_factory=list)
    class_names: tuple = ()
    window_len: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE

    def __len__(self):
        return self.data.shape[0]

    @property
    def windows(self) -> list[Window]:
        subj = self.subjects or [""] * len(self)
        return [Window(self.data[i], int(self.labels[i]), subj[i]) for i in range(len(self))]

    def normalized(self, idx=None) -> np.ndarray:
        x = self.data if idx is None else self.data[idx]
        return apply_normalizer(x, self.normalizer)

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def build_dataset(recordings, labels, window_len=DEFAULT_WINDOW, stride=DEFAULT_STRIDE,
                  ratio=0.7, seed=0, num_classes=None, class_names=()) -> WindowedDataset:
    """Segment recordings, split the windows at random and fit the normalizer.

    The split unit is the window, so overlapping windows of one trial can land
    on both sides of the split.
    """
    data, lab, subj = [], [], []
    for rec, y in zip(recordings, labels):
        for w in segment(rec, window_len, stride, y):
            data.append(w.data)
            lab.append(w.label)
            subj.append(w.subject)
    if not data:
        raise EmptyDataset(f"no recording is at least {window_len} samples long")
    channels = {d.shape[1] for d in data}
    if len(channels) != 1:
        raise ShapeMismatch(f"recordings disagree on channel count: {sorted(channels)}")
    x = np.stack(data)
    y = np.asarray(lab, dtype=np.int64)
    train, test = split(len(x), ratio, seed)
    if num_classes is None:
        num_classes = len(class_names) if class_names else int(y.max()) + 1
    return WindowedDataset(x, y, num_classes, fit_normalizer(x[train]), train, test,
                           subj, tuple(class_names), window_len, stride)


# --- HARW windowed-dataset export -------------------------------------------

HARW_MAGIC = b"HARW"
HARW_VERSION = 1
_HARW_HEADER = struct.Struct("<4s7I")


def export_windows(dataset: WindowedDataset, path, idx=None) -> None:
    """Write raw windows (optionally a subset) in the HARW binary layout."""
    if idx is None:
        x, y = dataset.data, dataset.labels
        train, test = dataset.train_idx, dataset.test_idx
    else:
        idx = np.asarray(idx)
        x, y = dataset.data[idx], dataset.labels[idx]
        train, test = np.arange(0), np.arange(len(idx))
    n, w, c = x.shape
    with open(path, "wb") as fh:
        fh.write(_HARW_HEADER.pack(HARW_MAGIC, HARW_VERSION, n, len(train), len(test),
                                   w, c, dataset.num_classes))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())
        fh.write(np.asarray(y, dtype="<i4").tobytes())
        fh.write(np.asarray(train, dtype="<u4").tobytes())
        fh.write(np.asarray(test, dtype="<u4").tobytes())


def read_windows(path):
    """Read a HARW file -> (data[N, W, C] float64, labels, train_idx, test_idx, num_classes)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HARW_HEADER.size:
        raise ValueError(f"{path}: truncated HARW header")
    magic, version, n, n_train, n_test, w, c, k = _HARW_HEADER.unpack_from(raw)
    if magic != HARW_MAGIC or version != HARW_VERSION:
        raise ValueError(f"{path}: not a HARW v{HARW_VERSION} file")
    expected = _HARW_HEADER.size + 4 * (n * w * c + n + n_train + n_test)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HARW_HEADER.size
    x = np.frombuffer(raw, "<f4", n * w * c, off).reshape(n, w, c).astype(np.float64)
    off += 4 * n * w * c
    y = np.frombuffer(raw, "<i4", n, off).astype(np.int64)
    off += 4 * n
    train = np.frombuffer(raw, "<u4", n_train, off).astype(np.int64)
    off += 4 * n_train
    test = np.frombuffer(raw, "<u4", n_test, off).astype(np.int64)
    return x, y, train, test, k
