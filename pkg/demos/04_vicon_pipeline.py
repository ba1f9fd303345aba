"""
End to end on the Vicon Physical Action dataset
===============================================

Usage: python demos/04_vicon_pipeline.py /path/to/vicon [--full]

Without --full this trains on 5 classes from 3 subjects for 200 epochs, which
takes minutes rather than hours. The dataset is not bundled.
"""

import sys
import time
from pathlib import Path

from harcnn import ingest
from harcnn import model as M
from harcnn.checkpoint import load_checkpoint, save_checkpoint
from harcnn.evaluation import evaluate_windows, render_report
from harcnn.preprocessing import build_dataset
from harcnn.training import TrainConfig, train

if len(sys.argv) < 2:
    sys.exit(__doc__)
root, full = sys.argv[1], "--full" in sys.argv
out = Path("vicon_out")

manifest = ingest.scan_dataset(root)
print(len(manifest.entries), "recordings,", len(manifest.class_names), "classes,",
      len(manifest.subjects), "subjects")
if not full:
    manifest = manifest.select(max_classes=5, max_subjects=3)

recs = ingest.load_recordings(manifest)
labels = [ingest.class_index(manifest, r.activity) for r in recs]
ds = build_dataset(recs, labels, class_names=manifest.class_names)
print(len(ds), "windows of", ds.window_len, "samples x", ds.channels, "channels")

mc = M.ModelConfig(channels=ds.channels, num_classes=ds.num_classes)
tc = TrainConfig(epochs=1000 if full else 200)
t0 = time.perf_counter()
params, history = train(ds, mc, tc, callback=lambda rec, _: print(
    f"\repoch {rec.epoch} test_acc {rec.test_acc:.4f}", end="", flush=True))
print(f"\ntrained in {(time.perf_counter() - t0) / 60:.1f} min, best epoch {history.best_epoch}")

out.mkdir(exist_ok=True)
save_checkpoint(params, mc, ds.normalizer, ds.class_names, out / "checkpoint.harn")
history.to_csv(out / "history.csv")
ckpt = load_checkpoint(out / "checkpoint.harn")
cm, report = evaluate_windows(ckpt, ds.data[ds.test_idx], ds.labels[ds.test_idx])
render_report(cm, report, out)
print((out / "confusion.txt").read_text())
print(f"accuracy {report.accuracy:.4f} precision {report.precision:.4f} "
      f"recall {report.recall:.4f} f1 {report.f1:.4f}")
# Windows overlap by half and are split at random, so neighbours of a test
# window are often in the training set; this number is optimistic.
