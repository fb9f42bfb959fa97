"""Run the desk-scale experiments on prepared event logs.

Expects labeled CSVs from ``tracernn prepare`` in DATA_DIR (``bpic12.csv``,
``bpic13.csv``, ``hospital.csv``). Each experiment writes its metrics CSVs to
OUT_DIR and the script finishes with a JSON summary of the headline numbers.
Experiments whose input file is missing are reported and skipped.

    python3 scripts/desk_protocol.py --data-dir data --out-dir results
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from tracernn import eventlog, evaluation
from tracernn.training import TrainConfig, train, train_on_prefixes

DESK = dict(hidden_size=32, layers=1, iterations=10, traces_per_iteration=10_000, seed=0)


def _load(data_dir, name):
    path = data_dir / f"{name}.csv"
    if not path.exists():
        print(f"skipping: {path} not found", file=sys.stderr)
        return None
    return eventlog.split(eventlog.parse_labeled_csv(path), eventlog.DEFAULT_SPLIT_FRACTION, 0)


def _run(out_dir, tag, ds, prefix_training=None, **overrides):
    cfg = TrainConfig(**{**DESK, **overrides})
    if prefix_training is None:
        bundle, reports = train(ds, cfg)
    else:
        bundle, reports = train_on_prefixes(ds, cfg, fraction=prefix_training)
    with open(out_dir / f"{tag}.csv", "w", newline="", encoding="utf-8") as f:
        evaluation.write_metrics_csv(reports, f)
    best = reports[bundle.best_iteration - 1]
    print(f"{tag}: best iteration {bundle.best_iteration}, accuracy {best.accuracy_at[100]:.4f}",
          file=sys.stderr)
    return bundle, reports


def bpic13(ds, out_dir):
    res = {}
    p = np.mean([t.label for t in ds.validation])
    res["majority_baseline"] = max(p, 1 - p)
    for kind in ("gru", "lstm"):
        bundle, reports = _run(out_dir, f"bpic13_{kind}", ds, cell_kind=kind)
        best = reports[bundle.best_iteration - 1]
        res[kind] = {"accuracy": best.accuracy_at[100], "auroc": best.auroc_at[100],
                     "total_train_seconds": sum(r.train_seconds for r in reports)}
    for h in (4, 8, 16):
        _, reports = _run(out_dir, f"bpic13_h{h}", ds, hidden_size=h)
        res[f"accuracy_h{h}"] = max(r.accuracy_at[100] for r in reports)
    res["accuracy_h32"] = res["gru"]["accuracy"]
    return res


def hospital(ds, out_dir):
    res = {}
    for tag, extra in (("full", {}), ("vocab20", {"vocab_size": 20}),
                       ("vocab20_truncated", {"vocab_size": 20, "truncate_unk_runs": True})):
        _, reports = _run(out_dir, f"hospital_{tag}", ds, **extra)
        res[tag] = {"seconds_per_iteration": float(np.mean([r.train_seconds for r in reports])),
                    "accuracy": max(r.accuracy_at[100] for r in reports)}
    return res


def bpic12(ds, out_dir):
    fr = {"prefix_fractions": (25, 50, 75, 100)}
    _, full = _run(out_dir, "bpic12_full", ds, **fr)
    _, half = _run(out_dir, "bpic12_prefix50", ds, prefix_training=50, **fr)
    return {"full_trained_at_50": max(r.accuracy_at[50] for r in full),
            "prefix50_trained_at_50": max(r.accuracy_at[50] for r in half)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", type=Path, default=Path("data"))
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    summary = {}
    for name, experiment in (("bpic13", bpic13), ("hospital", hospital), ("bpic12", bpic12)):
        ds = _load(args.data_dir, name)
        if ds is not None:
            summary[name] = experiment(ds, args.out_dir)
    text = json.dumps(summary, indent=2)
    (args.out_dir / "summary.json").write_text(text + "\n")
    print(text)


if __name__ == "__main__":
    main()
