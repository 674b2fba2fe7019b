"""Exact rational metric values for fixed confusion matrices.

Writes metric_reference.json. Each value is the correctly rounded double of the
exact fraction, plus the fraction itself as a string.
"""
import json
from fractions import Fraction as F

MATRICES = [
    # tp, fp, tn, fn
    (90, 10, 0, 2),
    (49, 5, 40, 1),
    (1, 0, 0, 0),
    (0, 0, 10, 0),
    (0, 5, 5, 0),
    (3, 1, 4, 1),
    (500, 250, 125, 125),
    (7, 3, 11, 13),
    (1000, 1, 1, 1000),
    (12, 0, 0, 12),
]


def div(a, b):
    return F(0) if b == 0 else F(a, b)


rows = []
for tp, fp, tn, fn in MATRICES:
    p = div(tp, tp + fp)
    r = div(tp, tp + fn)
    f1 = F(0) if p + r == 0 else 2 * p * r / (p + r)
    acc = div(tp + tn, tp + fp + tn + fn)
    rows.append({
        "tp": tp, "fp": fp, "tn": tn, "fn": fn,
        "precision": float(p), "recall": float(r), "f1": float(f1), "accuracy": float(acc),
        "exact": {k: str(v) for k, v in [("precision", p), ("recall", r), ("f1", f1), ("accuracy", acc)]},
    })

with open("metric_reference.json", "w") as fh:
    json.dump(rows, fh, indent=1)
    fh.write("\n")
