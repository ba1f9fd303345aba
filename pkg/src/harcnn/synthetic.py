"""Synthetic marker-like recordings for tests and demos.

Each activity gets its own base frequency and per-channel phase, so classes
are separable from a single window while still looking like smooth joint
trajectories in millimetres.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import TimeSeriesRecording

SAMPLE_RATE = 200.0


def activity_signal(activity_idx, length, channels, rng, noise=0.05, rate=SAMPLE_RATE):
    t = np.arange(length) / rate
    freq = 0.8 + 0.7 * activity_idx
    phase = 2 * np.pi * ((activity_idx * 0.37 + np.arange(channels) * 0.21) % 1.0)
    amp = 50.0 * (1.0 + 0.3 * np.cos(np.arange(channels) + activity_idx))
    offset = 400.0 + 100.0 * np.arange(channels)
    x = offset + amp * np.sin(2 * np.pi * freq * t[:, None] + phase)
    x += noise * amp * rng.standard_normal((length, channels))
    return x


def make_recordings(activities, subjects=("subject1",), length=600, channels=3, seed=0,
                    noise=0.05):
    """One recording per (subject, activity) pair, in that nested order."""
    rng = np.random.default_rng(seed)
    recs = []
    for subj in subjects:
        for i, act in enumerate(activities):
            recs.append(TimeSeriesRecording(
                activity_signal(i, length, channels, rng, noise), subj, act))
    return recs


def write_tree(root, activities, subjects=("subject1",), length=600, channels=3, seed=0,
               noise=0.05, group="normal", fmt="%.4f", sep=","):
    """Write ``root/<subject>/<group>/<Activity>.txt`` files; returns the recordings."""
    root = Path(root)
    recs = make_recordings(activities, subjects, length, channels, seed, noise)
    for rec in recs:
        d = root / rec.subject / group
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / f"{rec.activity.title()}.txt", rec.samples, fmt=fmt, delimiter=sep)
    return recs
