"""Binary checkpoint format (``HARN``).

Layout, all integers little-endian::

    magic     4 bytes  b"HARN"
    version   u32      1
    meta_len  u32      byte length of the metadata block
    metadata  UTF-8 JSON: class_names, model_config, normalizer (mean/std),
              window (length, stride, repair_policy), params (name, shape) list
    payload   float32 LE arrays in the order listed under ``params``

Parameters are stored as float32; loading widens them back to float64, so a
loaded model predicts exactly like ``quantize(params)``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import CorruptCheckpoint
from .ingest import REPAIR_POLICIES
from .model import PARAM_NAMES, ModelConfig
from .preprocessing import DEFAULT_STRIDE, Normalizer

MAGIC = b"HARN"
VERSION = 1
_HEAD = struct.Struct("<4sII")


class Checkpoint(NamedTuple):
    params: dict
    model_config: ModelConfig
    normalizer: Normalizer
    class_names: tuple
    stride: int = DEFAULT_STRIDE
    repair_policy: str = "hold-last-value"


def quantize(params: dict) -> dict:
    """The float32-rounded parameters a checkpoint actually stores."""
    return {k: np.asarray(a, dtype=np.float32).astype(np.float64) for k, a in params.items()}


def save_checkpoint(params, model_config: ModelConfig, normalizer: Normalizer, class_names, path,
                    stride: int = DEFAULT_STRIDE, repair_policy: str = "hold-last-value") -> None:
    class_names = list(class_names)
    if len(class_names) != model_config.num_classes:
        raise ValueError(f"{len(class_names)} class names for {model_config.num_classes} classes")
    shapes = model_config.param_shapes()
    for n in PARAM_NAMES:
        if params[n].shape != shapes[n]:
            raise ValueError(f"{n} has shape {params[n].shape}, expected {shapes[n]}")
    meta = {
        "class_names": class_names,
        "model_config": model_config.to_dict(),
        "normalizer": {"mean": [float(v) for v in normalizer.mean],
                       "std": [float(v) for v in normalizer.std]},
        "window": {"length": model_config.input_len, "stride": int(stride),
                   "repair_policy": repair_policy},
        "params": [[n, list(shapes[n])] for n in PARAM_NAMES],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for n in PARAM_NAMES:
            fh.write(np.ascontiguousarray(params[n], dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise CorruptCheckpoint(f"{path}: truncated header")
    magic, version, meta_len = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported version {version}")
    end = _HEAD.size + meta_len
    if len(raw) < end:
        raise CorruptCheckpoint(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[_HEAD.size:end].decode("utf-8"))
        config = ModelConfig.from_dict(meta["model_config"])
        norm = Normalizer(np.array(meta["normalizer"]["mean"], dtype=np.float64),
                          np.array(meta["normalizer"]["std"], dtype=np.float64))
        class_names = tuple(meta["class_names"])
        window = meta["window"]
        layout = [(n, tuple(s)) for n, s in meta["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable metadata ({exc})") from None
    if [n for n, _ in layout] != list(PARAM_NAMES) or dict(layout) != config.param_shapes():
        raise CorruptCheckpoint(f"{path}: parameter layout does not match its config")
    if len(class_names) != config.num_classes or norm.channels != config.channels:
        raise CorruptCheckpoint(f"{path}: metadata is inconsistent")
    if window.get("repair_policy") not in REPAIR_POLICIES:
        raise CorruptCheckpoint(f"{path}: unknown repair policy")

    total = sum(int(np.prod(s)) for _, s in layout)
    if len(raw) != end + 4 * total:
        raise CorruptCheckpoint(
            f"{path}: expected {end + 4 * total} bytes, found {len(raw)}")
    params, off = {}, end
    for n, shape in layout:
        size = int(np.prod(shape))
        params[n] = np.frombuffer(raw, "<f4", size, off).reshape(shape).astype(np.float64)
        off += 4 * size
    return Checkpoint(params, config, norm, class_names, int(window["stride"]),
                      window["repair_policy"])
