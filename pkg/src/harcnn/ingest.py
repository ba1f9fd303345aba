"""Discovery and parsing of motion-capture recordings.

The expected tree is ``root/<subject>/<group>/.../<activity>.<ext>``, e.g. the
published Vicon Physical Action archive (``sub1/Normal/txt/Bowing.txt``).
The first directory below ``root`` names the subject and the file stem names
the activity.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, MalformedRecording, UnknownClass

log = logging.getLogger(__name__)

RECORDING_SUFFIXES = (".txt", ".csv", ".tsv", ".dat")
REPAIR_POLICIES = ("hold-last-value", "drop-row")


def normalize_activity(name: str) -> str:
    """Canonical activity name: lowercase, no digits/extension, single spaces."""
    stem = Path(name).stem if Path(name).suffix.lower() in RECORDING_SUFFIXES else name
    stem = re.sub(r"\d+", " ", stem.lower())
    stem = re.sub(r"[\s_\-]+", " ", stem)
    return stem.strip()


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[tuple[str, str, str], ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        names = list(self.class_names)
        if names != sorted(set(names), key=str.casefold):
            raise ValueError("class_names must be sorted and duplicate-free")
        known = set(names)
        for _, _, activity in self.entries:
            if activity not in known:
                raise UnknownClass(activity)

    def __len__(self):
        return len(self.entries)

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({s for _, s, _ in self.entries}))

    def select(self, classes=None, subjects=None, max_classes=None, max_subjects=None):
        """Restrict to a subset of classes/subjects; class_names shrink accordingly."""
        keep_cls = list(self.class_names)
        if classes is not None:
            wanted = {normalize_activity(c) for c in classes}
            for c in wanted - set(keep_cls):
                raise UnknownClass(c)
            keep_cls = [c for c in keep_cls if c in wanted]
        if max_classes is not None:
            keep_cls = keep_cls[:max_classes]
        keep_subj = list(self.subjects)
        if subjects is not None:
            keep_subj = [s for s in keep_subj if s in set(subjects)]
        if max_subjects is not None:
            keep_subj = keep_subj[:max_subjects]
        keep_cls_set, keep_subj_set = set(keep_cls), set(keep_subj)
        entries = tuple(e for e in self.entries
                        if e[2] in keep_cls_set and e[1] in keep_subj_set)
        if not entries:
            raise EmptyDataset("selection matched no recordings")
        used = sorted({e[2] for e in entries}, key=str.casefold)
        return DatasetManifest(entries, tuple(used))


@dataclass(frozen=True)
class TimeSeriesRecording:
    samples: np.ndarray  # [T, C]
    subject: str
    activity: str
    source_path: str = ""

    def __post_init__(self):
        s = self.samples
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise MalformedRecording(f"bad sample matrix shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise MalformedRecording("recording contains non-finite values")
        s.setflags(write=False)

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]


def scan_dataset(root_dir) -> DatasetManifest:
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    if not os.access(root, os.R_OK | os.X_OK):
        raise PermissionError(f"dataset directory not readable: {root}")

    entries = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        rel = Path(dirpath).relative_to(root)
        if not rel.parts:
            continue  # files directly under root have no subject
        subject = rel.parts[0]
        for fname in sorted(filenames):
            if fname.startswith(".") or Path(fname).suffix.lower() not in RECORDING_SUFFIXES:
                continue
            activity = normalize_activity(fname)
            if not activity:
                continue
            entries.append((str(Path(dirpath) / fname), subject, activity))

    if not entries:
        raise EmptyDataset(f"no recordings found under {root}")
    entries.sort(key=lambda e: e[0])
    class_names = sorted({e[2] for e in entries}, key=str.casefold)
    return DatasetManifest(tuple(entries), tuple(class_names))


def class_index(manifest: DatasetManifest, activity: str) -> int:
    try:
        return manifest.class_names.index(activity)
    except ValueError:
        raise UnknownClass(activity) from None


def _parse_field(tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        return math.nan
    return v


def parse_recording(path, policy: str = "hold-last-value", subject: str = "",
                    activity: str | None = None) -> TimeSeriesRecording:
    """Parse one comma- or whitespace-separated recording file.

    Missing or non-numeric cells count as NaN. Under ``drop-row`` such rows are
    discarded; under ``hold-last-value`` each bad cell repeats the previous
    row's value for that channel (rows before the first complete one are
    dropped).
    """
    if policy not in REPAIR_POLICIES:
        raise ValueError(f"unknown repair policy {policy!r}")
    path = Path(path)
    text = path.read_text(encoding="utf-8", errors="replace")
    return _parse_text(text, policy, subject,
                       normalize_activity(path.name) if activity is None else activity,
                       str(path))


def _parse_text(text, policy, subject, activity, source):
    ncols = None
    rows = []
    last = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        # an empty cell between commas is a missing value
        toks = [t.strip() for t in line.split(",")] if "," in line else line.split()
        vals = [_parse_field(t) if t else math.nan for t in toks]
        if ncols is None:
            if not any(math.isfinite(v) for v in vals):
                continue  # header or junk before the data
            ncols = len(vals)
        elif len(vals) != ncols:
            raise MalformedRecording(
                f"{source}: line {lineno} has {len(vals)} columns, expected {ncols}")
        row = np.asarray(vals, dtype=np.float64)
        bad = ~np.isfinite(row)
        if bad.any():
            if policy == "drop-row" or last is None:
                continue
            row[bad] = last[bad]
        rows.append(row)
        last = row
    if not rows:
        raise MalformedRecording(f"{source}: no parseable rows")
    return TimeSeriesRecording(np.vstack(rows), subject, activity, source)


def load_recordings(manifest: DatasetManifest, policy="hold-last-value", workers=None):
    """Parse every manifest entry; order follows the manifest."""
    def one(entry):
        path, subject, activity = entry
        return parse_recording(path, policy, subject=subject, activity=activity)

    if workers == 1 or len(manifest) < 2:
        return [one(e) for e in manifest.entries]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, manifest.entries))


def manifest_csv(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "subject", "activity", "class_index"])
    for path, subject, activity in manifest.entries:
        w.writerow([path, subject, activity, class_index(manifest, activity)])
    return buf.getvalue()


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest_csv(manifest), encoding="utf-8", newline="")
