"""Command-line front end: ``tracernn prepare|train|evaluate|predict``.

Exit codes: 0 success, 2 usage/configuration, 3 data error, 4 model error.
"""
import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone

from . import __version__, eventlog, evaluation, training
from .errors import ConfigError, DataError, ModelFormatError
from .training import TrainConfig, atomic_write_bytes
from .vocab import encode_all

EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 2, 3, 4


class UsageError(Exception):
    pass


def _fractions(text):
    try:
        out = tuple(int(x) if float(x).is_integer() else float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None
    if not out or any(not 0 < f <= 100 for f in out):
        raise argparse.ArgumentTypeError("fractions must be in (0, 100]")
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _csv_bytes(write):
    buf = io.StringIO()
    write(buf)
    return buf.getvalue().encode("utf-8")


def cmd_prepare(args):
    if args.label_attribute and "=" not in args.label_attribute:
        raise UsageError("--label-attribute expects COL=VALUE")
    attr = args.label_attribute.split("=", 1) if args.label_attribute else None
    cases = eventlog.parse_event_csv(
        args.events, case=args.case, activity=args.activity, timestamp=args.timestamp,
        timestamp_format=args.format, delimiter=args.delimiter,
        attributes=(attr[0],) if attr else ())
    if args.max_cases is not None:
        cases = cases[:args.max_cases]
    if attr:
        traces, missing = eventlog.label_by_attribute(cases, attr[0], attr[1])
        if missing:
            print(f"warning: {missing} case(s) without {attr[0]!r}; labeled false", file=sys.stderr)
    else:
        try:
            span = eventlog.parse_span(args.label_duration)
        except ValueError as e:
            raise UsageError(str(e)) from None
        traces = eventlog.label_by_duration(cases, span)
    atomic_write_bytes(args.out, _csv_bytes(lambda f: eventlog.write_labeled_csv(traces, f)))
    s = eventlog.summarize(traces)
    print("traces,positives,percent_positive,max_length,activities")
    print(f"{s['traces']},{s['positives']},{s['percent_positive']},{s['max_length']},{s['activities']}")
    return 0


def _config_from_args(args):
    return TrainConfig(
        cell_kind=args.cell, hidden_size=args.hidden, layers=args.layers,
        vocab_size=args.vocab_size, truncate_unk_runs=args.truncate_unk,
        batch_size=args.batch_size, iterations=args.iterations,
        traces_per_iteration=args.traces_per_iteration, learning_rate=args.lr,
        clip_norm=args.clip, seed=args.seed, prefix_fractions=args.prefixes,
        train_prefix_fraction=args.train_prefix)


def cmd_train(args):
    started = _now()
    config = _config_from_args(args)
    traces = eventlog.parse_labeled_csv(args.data, seq_separator=args.separator)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    dataset = eventlog.split(traces, args.split_fraction, split_seed)

    manifest_path = args.manifest or args.model + ".manifest.json"
    manifest = {
        "tool": "tracernn", "version": __version__, "config": config.to_dict(),
        "split": {"fraction": args.split_fraction, "seed": split_seed,
                  "training": len(dataset.training), "validation": len(dataset.validation)},
        "inputs": {args.data: _sha256(args.data)},
        "outputs": {"model": args.model, "metrics": args.metrics},
        "started": started, "finished": None, "status": "running",
    }
    atomic_write_bytes(manifest_path, json.dumps(manifest, indent=2).encode("utf-8"))

    def progress(ev):
        if args.quiet or ev["event"] != "iteration":
            return
        print(f"iter {ev['iteration']:>3}  loss {ev['mean_loss']:.4f}  acc {ev['accuracy']:.4f}  "
              f"train {ev['train_seconds']:.2f}s  eval {ev['eval_seconds']:.2f}s", file=sys.stderr)

    bundle, reports = training.train(dataset, config, progress)
    metrics = _csv_bytes(lambda f: evaluation.write_metrics_csv(
        reports, f, include_timings=not args.no_timings))
    training.save(bundle, args.model)
    atomic_write_bytes(args.metrics, metrics)

    manifest.update(
        finished=_now(), status="complete", best_iteration=bundle.best_iteration,
        iterations=[{"iteration": h["iteration"], "train_seconds": h["train_seconds"],
                     "eval_seconds": h["eval_seconds"], "accuracy": h["accuracy"]}
                    for h in bundle.history],
        total_train_seconds=sum(h["train_seconds"] for h in bundle.history),
        output_digests={args.model: _sha256(args.model), args.metrics: _sha256(args.metrics)})
    atomic_write_bytes(manifest_path, json.dumps(manifest, indent=2).encode("utf-8"))
    best = bundle.history[bundle.best_iteration - 1]
    print(f"best iteration {bundle.best_iteration}: accuracy {best['accuracy']:.4f}"
          + (f", auroc {best['auroc']:.4f}" if best["auroc"] is not None else ""))
    return 0


def cmd_evaluate(args):
    bundle = training.load(args.model)
    traces = eventlog.parse_labeled_csv(args.data, seq_separator=args.separator)
    enc = encode_all(traces, bundle.vocab, bundle.config.truncate_unk_runs)
    t0 = time.perf_counter()
    report = evaluation.evaluate(bundle, enc, args.prefixes, iteration=bundle.best_iteration)
    report.eval_seconds = time.perf_counter() - t0
    atomic_write_bytes(args.out, _csv_bytes(lambda f: evaluation.write_metrics_csv([report], f)))
    for frac in args.prefixes:
        a = report.auroc_at[frac]
        print(f"{frac}%: accuracy {report.accuracy_at[frac]:.4f}"
              + (f", auroc {a:.4f}" if a is not None else ""))
    return 0


def _read_sequences(path, separator):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if not reader.fieldnames or "sequence" not in [n.strip().lower() for n in reader.fieldnames]:
            raise DataError("missing column 'sequence'")
        col = next(n for n in reader.fieldnames if n.strip().lower() == "sequence")
        out = []
        for row in reader:
            toks = [t for t in (row[col] or "").strip().split(separator) if t.strip()]
            if not toks:
                raise DataError("empty sequence", reader.line_num)
            out.append(toks)
    return out


def cmd_predict(args):
    if args.sequence is not None:
        seqs = [[t for t in args.sequence.strip().split(args.separator) if t.strip()]]
        if not seqs[0]:
            raise UsageError("--sequence is empty")
    else:
        seqs = _read_sequences(args.data, args.separator)
    bundle = training.load(args.model)
    lines = []
    for toks in seqs:
        label, p = evaluation.classify(bundle, bundle.encode_tokens(toks).ids)
        lines.append(f"{'true' if label else 'false'},{p!r}\n")
    text = "".join(lines)
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tracernn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tracernn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("prepare", help="label a raw event CSV and write a label,sequence CSV")
    pr.add_argument("--events", required=True)
    pr.add_argument("--case", default="case")
    pr.add_argument("--activity", default="activity")
    pr.add_argument("--timestamp", default="timestamp")
    pr.add_argument("--format", default="%Y-%m-%d %H:%M:%S",
                    help="strptime pattern, e.g. '%%Y-%%m-%%dT%%H:%%M:%%S.%%f%%z'; naive times are UTC")
    pr.add_argument("--delimiter", default=",")
    pr.add_argument("--max-cases", type=int, help="keep only the first N cases (file order)")
    lab = pr.add_mutually_exclusive_group(required=True)
    lab.add_argument("--label-duration", metavar="SPAN",
                     help="label true when case duration > SPAN (e.g. 7d, 2w)")
    lab.add_argument("--label-attribute", metavar="COL=VALUE")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_prepare)

    d = TrainConfig()
    tr = sub.add_parser("train", help="train a GRU/LSTM classifier")
    tr.add_argument("--data", required=True)
    tr.add_argument("--separator", default=" ", help="token separator inside the sequence column")
    tr.add_argument("--cell", choices=["gru", "lstm"], default=d.cell_kind)
    tr.add_argument("--hidden", type=int, default=d.hidden_size)
    tr.add_argument("--layers", type=int, choices=[1, 2], default=d.layers)
    tr.add_argument("--vocab-size", type=int, default=None)
    tr.add_argument("--truncate-unk", action="store_true")
    tr.add_argument("--batch-size", type=int, default=d.batch_size)
    tr.add_argument("--iterations", type=int, default=d.iterations)
    tr.add_argument("--traces-per-iteration", type=int, default=d.traces_per_iteration)
    tr.add_argument("--lr", type=float, default=d.learning_rate)
    tr.add_argument("--clip", type=float, default=d.clip_norm)
    tr.add_argument("--seed", type=int, default=d.seed)
    tr.add_argument("--train-prefix", type=float, default=d.train_prefix_fraction)
    tr.add_argument("--prefixes", type=_fractions, default=d.prefix_fractions)
    tr.add_argument("--split-fraction", type=float, default=eventlog.DEFAULT_SPLIT_FRACTION)
    tr.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")
    tr.add_argument("--model", required=True)
    tr.add_argument("--metrics", required=True)
    tr.add_argument("--manifest", help="defaults to MODEL.manifest.json")
    tr.add_argument("--no-timings", action="store_true",
                    help="leave timing columns empty so reruns diff clean")
    tr.add_argument("--quiet", action="store_true")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="score a labeled CSV with a saved model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--separator", default=" ")
    ev.add_argument("--prefixes", type=_fractions, default=d.prefix_fractions)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    pd = sub.add_parser("predict", help="print label,prob_true per sequence")
    pd.add_argument("--model", required=True)
    src = pd.add_mutually_exclusive_group(required=True)
    src.add_argument("--sequence")
    src.add_argument("--data", help="CSV with a 'sequence' column")
    pd.add_argument("--separator", default=" ")
    pd.add_argument("--out")
    pd.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ModelFormatError as e:
        print(f"model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, UnicodeDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        model = getattr(args, "model", None)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL if model and e.filename == model else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
