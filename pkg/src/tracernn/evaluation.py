"""Prefix construction, classification and validation metrics."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cells import make_batch, predict_proba
from .errors import UndefinedMetricError
from .vocab import EncodedTrace

DEFAULT_FRACTIONS = (25, 50, 75, 100)
METRICS_COLUMNS = ("iteration", "fraction", "accuracy", "auroc", "tp", "fp", "fn", "tn",
                   "train_seconds", "eval_seconds")


@dataclass
class MetricsReport:
    iteration: int
    accuracy_at: dict = field(default_factory=dict)
    auroc_at: dict = field(default_factory=dict)      # fraction -> float or None
    confusion: dict = field(default_factory=dict)     # fraction -> (tp, fp, fn, tn)
    train_seconds: float = 0.0
    eval_seconds: float = 0.0

    @property
    def auroc(self) -> Optional[float]:
        return self.auroc_at.get(100)


def prefix_length(n, fraction):
    if not 0 < fraction <= 100:
        raise ValueError(f"prefix fraction must be in (0, 100], got {fraction}")
    # Rounded before the ceiling so 0.29 * 100 style float error cannot add a step.
    return max(1, math.ceil(round(fraction * n / 100.0, 9)))


def prefix(ids, fraction):
    """Leading ``max(1, ceil(fraction/100 * len))`` items of ``ids``."""
    return ids[:prefix_length(len(ids), fraction)]


def prefix_encoded(enc, fraction):
    return EncodedTrace(prefix(enc.ids, fraction), enc.label_id)


def score(model, encoded, batch_size=512):
    """Probability of the true class for each encoded trace, in input order.

    Traces are batched in length order so padding stays small; the merge back
    into input order is deterministic.
    """
    if not encoded:
        return np.empty(0)
    order = sorted(range(len(encoded)), key=lambda i: (len(encoded[i].ids), i))
    out = np.empty(len(encoded))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        probs = predict_proba(make_batch([encoded[i] for i in idx]), model.cell, model.head)
        out[idx] = probs[:, 1]
    return out


def classify(model, ids):
    """Return ``(label, prob_true)``. An exact 0.5 resolves to False."""
    if len(ids) == 0:
        raise ValueError("cannot classify an empty sequence")
    p = float(score(model, [EncodedTrace(tuple(ids), 0)])[0])
    return p > 0.5, p


def auroc(scores, labels):
    """Mann-Whitney AUROC from midrank sums; ties between classes count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s))
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0   # mean of 1-based ranks i+1..j+1
        i = j + 1
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(pred, truth):
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def evaluate(model, validation, fractions=DEFAULT_FRACTIONS, iteration=0):
    if not validation:
        raise ValueError("validation set is empty")
    report = MetricsReport(iteration)
    truth = np.array([e.label_id == 1 for e in validation])
    for frac in fractions:
        p = score(model, [prefix_encoded(e, frac) for e in validation])
        cm = confusion(p > 0.5, truth)
        report.confusion[frac] = cm
        report.accuracy_at[frac] = (cm[0] + cm[3]) / len(validation)
        try:
            report.auroc_at[frac] = auroc(p, truth)
        except UndefinedMetricError:
            report.auroc_at[frac] = None
    return report


def metrics_rows(reports, include_timings=True):
    for r in reports:
        for frac in sorted(r.accuracy_at):
            a = r.auroc_at.get(frac)
            tp, fp, fn, tn = r.confusion[frac]
            yield [r.iteration, frac, repr(float(r.accuracy_at[frac])),
                   "" if a is None else repr(float(a)), tp, fp, fn, tn,
                   repr(r.train_seconds) if include_timings else "",
                   repr(r.eval_seconds) if include_timings else ""]


def write_metrics_csv(reports, f, include_timings=True):
    """Write one row per (iteration, fraction). ``f`` is an open text file.

    Absent AUROC is an empty cell. With ``include_timings=False`` the two
    timing columns are left empty so reruns compare byte-for-byte.
    """
    w = csv.writer(f, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    w.writerows(metrics_rows(reports, include_timings))


def read_metrics_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
