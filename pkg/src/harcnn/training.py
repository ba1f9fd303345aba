"""Optimizers and the mini-batch training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as M
from ._rng import substream
from .kernels import log_softmax
from .errors import DivergenceError, EmptyTrainingSet, ShapeMismatch
from .preprocessing import WindowedDataset, one_hot

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 200
    epochs: int = 1000
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int | None = None
    min_delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        # lr = 0 is allowed: it freezes the parameters (plateau construction).
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params, optimizer="adam"):
        if optimizer == "sgd":
            return cls()
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def _check_shapes(params, grads):
    for k, a in params.items():
        if k not in grads or np.shape(grads[k]) != np.shape(a):
            raise ShapeMismatch(f"gradient for {k!r} does not match parameter shape")


def sgd_step(params, grads, lr):
    """Plain gradient descent; returns new arrays, inputs are left untouched."""
    _check_shapes(params, grads)
    return {k: a - lr * grads[k] for k, a in params.items()}


def adam_step(params, grads, state: OptimizerState, config: TrainConfig):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    _check_shapes(params, grads)
    if state.m and set(state.m) != set(params):
        raise ShapeMismatch("optimizer state does not match parameters")
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, a in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        m = b1 * state.m.get(k, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1.0 - b2) * (g * g)
        new_p[k] = a - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, OptimizerState(new_m, new_v, t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    seconds: float


HISTORY_HEADER = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds")


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    final_params: dict | None = None

    def __len__(self):
        return len(self.records)

    def append(self, rec: EpochRecord):
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        if not (np.isfinite(rec.train_loss) and np.isfinite(rec.test_loss)):
            raise ValueError("history losses must be finite")
        self.records.append(rec)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_HEADER)
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc),
                            repr(r.test_loss), repr(r.test_acc), f"{r.seconds:.3f}"])

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        h = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                h.append(EpochRecord(int(row["epoch"]), *(float(row[k]) for k in HISTORY_HEADER[1:])))
        return h


def evaluate_arrays(params, x, labels, config: M.ModelConfig, batch_size=512):
    """Mean cross-entropy (with L2 term) and accuracy of ``params`` on ``x[B, C, W]``."""
    logits = M.predict_logits(params, x, config, batch_size)
    ce = -log_softmax(logits)[np.arange(len(labels)), labels]
    loss = float(np.mean(ce)) + M.l2_penalty(params, config.l2_lambda)
    acc = float(np.mean(logits.argmax(axis=1) == labels))
    return loss, acc


def _channel_first(x):
    return np.ascontiguousarray(np.swapaxes(x, -1, -2))


def train(dataset: WindowedDataset, model_config: M.ModelConfig, train_config: TrainConfig,
          params=None, callback=None):
    """Fit the classifier on the dataset's training split.

    Each epoch shuffles the training windows (seeded), steps through mini-batches
    and then scores the test split. Returns the parameters with the lowest test
    loss together with the history; the last-epoch parameters are kept in
    ``history.final_params``. With ``patience`` set, training stops once the
    test loss has failed to improve by ``min_delta`` for that many epochs.
    """
    tc, mc = train_config, model_config
    if len(dataset.train_idx) == 0 or len(dataset.test_idx) == 0:
        raise EmptyTrainingSet("train and test partitions must both be nonempty")
    if set(dataset.train_idx.tolist()) & set(dataset.test_idx.tolist()):
        raise ValueError("train and test partitions overlap")
    if (mc.input_len, mc.channels) != (dataset.data.shape[1], dataset.data.shape[2]):
        raise ShapeMismatch("model config does not match the dataset window shape")

    x_train = _channel_first(dataset.normalized(dataset.train_idx))
    y_train = dataset.labels[dataset.train_idx]
    t_train = one_hot(y_train, mc.num_classes)
    x_test = _channel_first(dataset.normalized(dataset.test_idx))
    y_test = dataset.labels[dataset.test_idx]

    if params is None:
        params = M.init_params(mc, tc.seed)
    state = OptimizerState.for_params(params, tc.optimizer)
    shuffle_rng = substream(tc.seed, "shuffle")
    history = TrainHistory()
    best_params, best_loss = params, np.inf
    since_best = 0
    n = len(y_train)

    for epoch in range(1, tc.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, tc.batch_size)):
            idx = order[start:start + tc.batch_size]
            logits, probs, cache = M.forward(params, x_train[idx], mc)
            batch_loss = M.loss(logits, t_train[idx], params, mc.l2_lambda)
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch, b, batch_loss)
            grads = M.backward(cache, t_train[idx], params, mc.l2_lambda)
            if tc.optimizer == "adam":
                params, state = adam_step(params, grads, state, tc)
            else:
                params = sgd_step(params, grads, tc.learning_rate)
            loss_sum += batch_loss * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == y_train[idx]))
        test_loss, test_acc = evaluate_arrays(params, x_test, y_test, mc)
        if not np.isfinite(test_loss):
            raise DivergenceError(epoch, -1, test_loss)
        rec = EpochRecord(epoch, loss_sum / n, correct / n, test_loss, test_acc,
                          time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d train_loss=%.5f train_acc=%.4f test_loss=%.5f test_acc=%.4f",
                 epoch, rec.train_loss, rec.train_acc, rec.test_loss, rec.test_acc)
        if callback is not None:
            callback(rec, params)

        if test_loss < best_loss - tc.min_delta:
            best_loss, best_params, history.best_epoch = test_loss, params, epoch
            since_best = 0
        else:
            since_best += 1
            if tc.patience is not None and since_best >= tc.patience:
                history.stopped_early = True
                log.info("early stop at epoch %d (best epoch %d)", epoch, history.best_epoch)
                break

    history.final_params = params
    return best_params, history

