"""``har`` command line: ingest, train, eval, predict.

Settings resolve as command-line flags over a ``key = value`` config file
(``--config``) over built-in defaults. Exit codes: 0 success, 1 usage,
2 dataset, 3 divergence, 4 checkpoint, 5 labeling.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import evaluation as E
from . import ingest as I
from . import preprocessing as P
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CorruptCheckpoint, DatasetError, HARError
from .model import ModelConfig
from .training import TrainConfig, train

log = logging.getLogger("harcnn")

EXIT_OK, EXIT_USAGE, EXIT_DATASET, EXIT_DIVERGENCE, EXIT_CHECKPOINT, EXIT_LABEL = range(6)


def _csv_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


def _bool(text):
    return str(text).lower() in ("1", "true", "yes", "on")


@dataclass
class RunConfig:
    data_dir: str = ""
    out_dir: str = "har_out"
    seed: int = 0
    threads: int = 0
    # preprocessing
    window: int = P.DEFAULT_WINDOW
    stride: int = P.DEFAULT_STRIDE
    repair_policy: str = "hold-last-value"
    split_ratio: float = 0.7
    classes: str = ""
    subjects: str = ""
    max_classes: int | None = None
    max_subjects: int | None = None
    # model
    conv1_kernel: int = 60
    conv1_out_channels: int = 60
    conv1_depth_multiplier: int = 1
    pool_window: int = 20
    pool_stride: int = 2
    conv2_kernel: int = 6
    conv2_stride: int = 1
    conv2_out_channels: int = 60
    fc_units: int = 1000
    l2_lambda: float = 1e-4
    # training
    batch_size: int = 200
    epochs: int = 1000
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int | None = None
    min_delta: float = 0.0
    # evaluation
    averaging: str = "weighted"
    per_trial: bool = False

    def model_config(self, channels, num_classes) -> ModelConfig:
        return ModelConfig(
            input_len=self.window, channels=channels, num_classes=num_classes,
            conv1_kernel=self.conv1_kernel, conv1_out_channels=self.conv1_out_channels,
            conv1_depth_multiplier=self.conv1_depth_multiplier,
            pool_window=self.pool_window, pool_stride=self.pool_stride,
            conv2_kernel=self.conv2_kernel, conv2_stride=self.conv2_stride,
            conv2_out_channels=self.conv2_out_channels, fc_units=self.fc_units,
            l2_lambda=self.l2_lambda)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, epochs=self.epochs, learning_rate=self.learning_rate,
            optimizer=self.optimizer, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            patience=self.patience, min_delta=self.min_delta, seed=self.seed)

    def echo(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


_CONVERTERS = {"int": int, "float": float, "str": str, "bool": _bool,
               "int | None": _opt_int}

HELP = {
    "data_dir": "dataset root (subject folders below it)",
    "out_dir": "directory for outputs",
    "seed": "master seed for split, init and shuffling",
    "threads": "cap on worker threads (0 = machine default)",
    "window": "window length in samples",
    "stride": "window stride in samples",
    "repair_policy": "missing-value handling: hold-last-value | drop-row",
    "split_ratio": "training fraction of the random window split",
    "classes": "comma-separated activity subset",
    "subjects": "comma-separated subject subset",
    "max_classes": "keep only the first N classes",
    "max_subjects": "keep only the first N subjects",
    "conv1_depth_multiplier": "depthwise kernels per input channel in conv1",
    "l2_lambda": "L2 coefficient on weights",
    "optimizer": "adam | sgd",
    "patience": "early-stop patience in epochs (off when unset)",
    "min_delta": "minimum test-loss improvement that resets patience",
    "averaging": "weighted | macro | micro",
    "per_trial": "majority vote per recording instead of per window",
}


def _converter(f):
    return _CONVERTERS[f.type if isinstance(f.type, str) else f.type.__name__]


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _converter(known[key])(value)
    return out


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(ns, "config", None):
        values.update(read_config_file(ns.config))
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p, names):
    defaults = RunConfig()
    by_name = {f.name: f for f in fields(RunConfig)}
    for name in names:
        f = by_name[name]
        flag = "--" + name.replace("_", "-")
        default = getattr(defaults, name)
        text = f"{HELP.get(name, name.replace('_', ' '))} (default: {default})"
        if _converter(f) is _bool:
            p.add_argument(flag, action="store_const", const=True, default=None, help=text)
        else:
            p.add_argument(flag, type=_converter(f), default=None, help=text)


SHARED = ("data_dir", "out_dir", "seed", "threads")
PREP = ("window", "stride", "repair_policy", "split_ratio", "classes", "subjects",
        "max_classes", "max_subjects")
MODEL = ("conv1_kernel", "conv1_out_channels", "conv1_depth_multiplier", "pool_window", "pool_stride", "conv2_kernel",
         "conv2_stride", "conv2_out_channels", "fc_units", "l2_lambda")
TRAIN = ("batch_size", "epochs", "learning_rate", "optimizer", "beta1", "beta2", "eps",
         "patience", "min_delta")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="har", description="Separable 1D CNN activity recognition.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="scan a dataset tree and count windows per class")
    p.add_argument("--config", help="key = value config file (default: none)")
    _add_run_flags(p, SHARED + PREP)

    p = sub.add_parser("train", help="split, normalize, train, write checkpoint and report")
    p.add_argument("--config", help="key = value config file (default: none)")
    _add_run_flags(p, SHARED + PREP + MODEL + TRAIN + ("averaging",))

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset tree or HARW file")
    p.add_argument("--config", help="key = value config file (default: none)")
    p.add_argument("--checkpoint", required=True, help="checkpoint file (required)")
    p.add_argument("--windows", help="HARW windows file instead of --data-dir (default: none)")
    _add_run_flags(p, SHARED + ("averaging", "per_trial"))

    p = sub.add_parser("predict", help="classify one recording file")
    p.add_argument("--config", help="key = value config file (default: none)")
    p.add_argument("--checkpoint", required=True, help="checkpoint file (required)")
    p.add_argument("--file", required=True, help="recording to classify (required)")
    _add_run_flags(p, SHARED)
    return parser


def _setup_logging():
    level = os.environ.get("HAR_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


@contextlib.contextmanager
def _thread_limit(n):
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


def _workers(cfg):
    return cfg.threads or None


def _load_manifest(cfg: RunConfig):
    if not cfg.data_dir:
        raise DatasetError("--data-dir is required")
    manifest = I.scan_dataset(cfg.data_dir)
    if cfg.classes or cfg.subjects or cfg.max_classes or cfg.max_subjects:
        manifest = manifest.select(
            classes=_csv_list(cfg.classes) or None, subjects=_csv_list(cfg.subjects) or None,
            max_classes=cfg.max_classes, max_subjects=cfg.max_subjects)
    return manifest


def cmd_ingest(cfg: RunConfig, ns) -> int:
    manifest = _load_manifest(cfg)
    recs = I.load_recordings(manifest, cfg.repair_policy, _workers(cfg))
    counts = {name: [0, 0] for name in manifest.class_names}
    for rec in recs:
        counts[rec.activity][0] += 1
        counts[rec.activity][1] += P.window_count(rec.length, cfg.window, cfg.stride)
    table = "activity,recordings,windows\n" + "".join(
        f"{name},{r},{w}\n" for name, (r, w) in counts.items())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    I.write_manifest(manifest, out / "manifest.csv")
    (out / "class_counts.csv").write_text(table, encoding="utf-8", newline="")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_train(cfg: RunConfig, ns) -> int:
    sys.stdout.write(cfg.echo())
    manifest = _load_manifest(cfg)
    recs = I.load_recordings(manifest, cfg.repair_policy, _workers(cfg))
    labels = [I.class_index(manifest, r.activity) for r in recs]
    ds = P.build_dataset(recs, labels, cfg.window, cfg.stride, cfg.split_ratio, cfg.seed,
                         class_names=manifest.class_names)
    mc = cfg.model_config(ds.channels, ds.num_classes)
    log.info("dataset: %d windows (%d train / %d test), %d channels, %d classes",
             len(ds), len(ds.train_idx), len(ds.test_idx), ds.channels, ds.num_classes)
    params, history = train(ds, mc, cfg.train_config())

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.harn"
    save_checkpoint(params, mc, ds.normalizer, manifest.class_names, ckpt_path,
                    stride=cfg.stride, repair_policy=cfg.repair_policy)
    history.to_csv(out / "history.csv")
    P.export_windows(ds, out / "test_split.harw", idx=ds.test_idx)

    # Score what was written, so `har eval --windows test_split.harw` agrees exactly.
    ckpt = load_checkpoint(ckpt_path)
    x, y, _, _, _ = P.read_windows(out / "test_split.harw")
    cm, report = E.evaluate_windows(ckpt, x, y, cfg.averaging)
    E.render_report(cm, report, out)
    sys.stdout.write(
        f"best epoch {history.best_epoch}/{len(history)}: accuracy={report.accuracy:.4f} "
        f"precision={report.precision:.4f} recall={report.recall:.4f} f1={report.f1:.4f}\n"
        "note: the split is per window, so overlapping windows of one trial can sit on "
        "both sides of it\n")
    return EXIT_OK


def _open_checkpoint(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from None


def cmd_eval(cfg: RunConfig, ns) -> int:
    ckpt = _open_checkpoint(ns.checkpoint)
    if ns.windows:
        x, y, _, _, _ = P.read_windows(ns.windows)
        cm, report = E.evaluate_windows(ckpt, x, y, cfg.averaging)
    else:
        if not cfg.data_dir:
            raise DatasetError("eval needs --data-dir or --windows")
        cm, report = E.evaluate_directory(ckpt, cfg.data_dir, cfg.averaging, cfg.per_trial,
                                          _workers(cfg))
    E.render_report(cm, report, cfg.out_dir)
    sys.stdout.write(f"accuracy={report.accuracy:.4f} precision={report.precision:.4f} "
                     f"recall={report.recall:.4f} f1={report.f1:.4f} ({report.averaging})\n")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, ns) -> int:
    ckpt = _open_checkpoint(ns.checkpoint)
    rec = I.parse_recording(ns.file, ckpt.repair_policy)
    wins = P.segment(rec, ckpt.model_config.input_len, ckpt.stride, 0)
    if not wins:
        raise DatasetError(
            f"{ns.file}: {rec.length} samples is shorter than one window "
            f"({ckpt.model_config.input_len})")
    pred, probs = E.predict_windows(ckpt, np.stack([w.data for w in wins]))
    names = ckpt.class_names
    for i, (k, pr) in enumerate(zip(pred, probs)):
        sys.stdout.write(f"window {i} {names[k]} p={pr[k]:.6f}\n")
    top = E.majority_vote(pred, len(names))
    sys.stdout.write(f"{names[top]} p={probs[:, top].mean():.6f}\n")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        cfg.model_config(1, 1)
        cfg.train_config()
    except (OSError, ValueError) as exc:
        print(f"har: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _thread_limit(cfg.threads):
            return COMMANDS[ns.command](cfg, ns)
    except HARError as exc:
        print(f"har: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"har: error: {exc}", file=sys.stderr)
        return EXIT_DATASET


if __name__ == "__main__":
    sys.exit(main())
