"""
Reading a confusion matrix
==========================

The three averaging modes on one lopsided matrix. Weighted recall always
equals accuracy; macro treats every class alike; micro collapses to accuracy
for single-label problems.
"""

import numpy as np

from harcnn.evaluation import ConfusionMatrix, confusion_text, metrics

counts = np.array([[50, 2, 0],
                   [10, 5, 5],
                   [0, 1, 9]])
cm = ConfusionMatrix(counts, ("standing", "waving", "hugging"))
print(confusion_text(cm))

print(f"{'':10s}{'precision':>10s}{'recall':>10s}{'f1':>10s}")
for avg in ("weighted", "macro", "micro"):
    m = metrics(cm, avg)
    print(f"{avg:10s}{m.precision:10.4f}{m.recall:10.4f}{m.f1:10.4f}")
print("accuracy", round(cm.accuracy, 4))

m = metrics(cm)
for name, p, r, f, n in zip(cm.class_names, m.per_class_precision, m.per_class_recall,
                            m.per_class_f1, m.support):
    print(f"  {name:10s} p={p:.3f} r={r:.3f} f1={f:.3f} n={n}")
