"""
Training on synthetic recordings
================================

Builds a small labeled dataset from generated marker trajectories, trains
the full-size network on it and scores the held-out windows.
"""

import numpy as np

from harcnn import model as M
from harcnn.evaluation import evaluate_windows
from harcnn.checkpoint import Checkpoint, quantize
from harcnn.preprocessing import build_dataset
from harcnn.synthetic import make_recordings
from harcnn.training import TrainConfig, train

activities = ["clapping", "jumping", "waving", "walking"]
recs = make_recordings(activities, subjects=("s1", "s2"), length=1200, channels=3, seed=4,
                       noise=0.3)
labels = [i for _ in range(2) for i in range(len(activities))]

# 200-sample windows every 100 samples, 70/30 random split of the windows
ds = build_dataset(recs, labels, 200, 100, 0.7, seed=4, class_names=activities)
print(len(ds), "windows:", len(ds.train_idx), "train /", len(ds.test_idx), "test")

mc = M.ModelConfig(channels=ds.channels, num_classes=ds.num_classes)
tc = TrainConfig(epochs=40, batch_size=32, learning_rate=1e-4, seed=4)
params, history = train(ds, mc, tc)

for rec in history.records[::5]:
    print(f"epoch {rec.epoch:3d}  train {rec.train_loss:.4f} / {rec.train_acc:.3f}"
          f"  test {rec.test_loss:.4f} / {rec.test_acc:.3f}")
print("best epoch", history.best_epoch)

ckpt = Checkpoint(quantize(params), mc, ds.normalizer, tuple(activities))
cm, report = evaluate_windows(ckpt, ds.data[ds.test_idx], ds.labels[ds.test_idx])
print(cm.counts)
print(f"accuracy {report.accuracy:.4f}  f1 {report.f1:.4f}")
assert np.trace(cm.counts) == round(report.accuracy * cm.total)
