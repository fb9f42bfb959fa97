"""Event-log ingestion, trace labeling and stratified train/validation splits."""
import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

from .errors import ConfigError, DataError, SchemaError
from .kernels import seeded_rng

log = logging.getLogger(__name__)

DEFAULT_SPLIT_FRACTION = 0.75
_TRUE = {"true", "1"}
_FALSE = {"false", "0"}


@dataclass(frozen=True)
class RawEvent:
    case_id: str
    activity: str
    timestamp: datetime
    attributes: dict = field(default_factory=dict, compare=False)


@dataclass
class Trace:
    case_id: str
    activities: list
    label: Optional[bool] = None
    duration: Optional[timedelta] = None


@dataclass
class Dataset:
    training: list
    validation: list
    split_seed: int
    split_fraction: float


def _parse_label(text, line):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise DataError(f"unparsable label {text!r} (expected true/false/1/0)", line)


def _open_rows(path, delimiter):
    # newline="" keeps quoted multi-line cells intact for the csv module.
    f = open(path, newline="", encoding="utf-8")
    return f, csv.reader(f, delimiter=delimiter)


def parse_labeled_csv(path, delimiter=",", seq_separator=" "):
    """Read a ``label,sequence`` CSV into traces.

    Case ids are synthesized from the data-row index (``row1``, ``row2``...).
    """
    f, reader = _open_rows(path, delimiter)
    with f:
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: missing header row") from None
        names = [h.strip().lower() for h in header]
        for col in ("label", "sequence"):
            if col not in names:
                raise SchemaError(f"missing column {col!r}")
        li, si = names.index("label"), names.index("sequence")
        traces = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(li, si):
                raise DataError("row has too few columns", line)
            label = _parse_label(row[li], line)
            tokens = [t for t in row[si].strip().split(seq_separator) if t.strip()]
            if not tokens:
                raise DataError("empty sequence", line)
            traces.append(Trace(f"row{len(traces) + 1}", tokens, label))
    return traces


def write_labeled_csv(traces, path_or_file, delimiter=",", seq_separator=" "):
    """Write traces in the ``label,sequence`` format read by :func:`parse_labeled_csv`."""
    own = not isinstance(path_or_file, io.IOBase)
    f = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        w.writerow(["label", "sequence"])
        for t in traces:
            if t.label is None:
                raise DataError(f"trace {t.case_id!r} has no label")
            for a in t.activities:
                if seq_separator in a:
                    raise DataError(
                        f"activity {a!r} contains the sequence separator {seq_separator!r}"
                    )
            w.writerow(["true" if t.label else "false", seq_separator.join(t.activities)])
    finally:
        if own:
            f.close()


def _parse_timestamp(text, fmt):
    ts = datetime.strptime(text.strip(), fmt)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    # Millisecond precision.
    return ts.replace(microsecond=ts.microsecond // 1000 * 1000)


def parse_event_csv(path, case="case", activity="activity", timestamp="timestamp",
                    timestamp_format="%Y-%m-%d %H:%M:%S", delimiter=",", attributes=()):
    """Group a raw event CSV into cases.

    Returns ``[(case_id, [RawEvent, ...]), ...]`` with cases in order of first
    appearance and events sorted by timestamp (ties keep file order).
    ``attributes`` names extra columns to carry on each event.
    """
    f, reader = _open_rows(path, delimiter)
    with f:
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file: missing header row") from None
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise SchemaError(f"duplicate header names: {', '.join(dupes)}")
        wanted = [case, activity, timestamp, *attributes]
        for col in wanted:
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
        ci, ai, ti = (header.index(c) for c in (case, activity, timestamp))
        extra = [(a, header.index(a)) for a in attributes]
        width = max(header.index(c) for c in wanted)

        groups = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= width:
                raise DataError("row has too few columns", line)
            act = row[ai].strip()
            if not act:
                raise DataError("empty activity", line)
            try:
                ts = _parse_timestamp(row[ti], timestamp_format)
            except ValueError as e:
                raise DataError(f"bad timestamp {row[ti]!r}: {e}", line) from None
            cid = row[ci].strip()
            attrs = {name: row[i] for name, i in extra}
            groups.setdefault(cid, []).append(RawEvent(cid, act, ts, attrs))
    # sorted() is stable, so equal timestamps keep file order.
    return [(cid, sorted(evs, key=lambda e: e.timestamp)) for cid, evs in groups.items()]


def label_by_duration(cases, threshold):
    """Label each case True when last minus first timestamp exceeds ``threshold``."""
    traces = []
    for cid, events in cases:
        if not events:
            raise DataError(f"case {cid!r} has no events")
        duration = events[-1].timestamp - events[0].timestamp
        traces.append(Trace(cid, [e.activity for e in events], duration > threshold, duration))
    return traces


def label_by_attribute(cases, attribute, expected):
    """Label by a case-level attribute equal to ``expected`` (both sides trimmed).

    The case-level value is the first non-empty value among the case's events.
    Cases without a value are labeled False. Returns ``(traces, n_missing)``.
    """
    expected = expected.strip()
    traces, missing = [], 0
    for cid, events in cases:
        if not events:
            raise DataError(f"case {cid!r} has no events")
        value = next((e.attributes[attribute].strip() for e in events
                      if e.attributes.get(attribute, "").strip()), None)
        if value is None:
            missing += 1
        duration = events[-1].timestamp - events[0].timestamp
        traces.append(Trace(cid, [e.activity for e in events], value == expected, duration))
    if missing:
        log.warning("%d case(s) have no %r value; labeled false", missing, attribute)
    return traces, missing


def _cut(n, fraction):
    # Small epsilon so e.g. 0.29 * 100 floors to 29, not 28.
    return math.floor(fraction * n + 1e-9)


def split(traces, fraction=DEFAULT_SPLIT_FRACTION, seed=0):
    """Stratified, seeded train/validation split.

    Positives are cut at ``floor(fraction * P)``; negatives fill the training
    half up to ``floor(fraction * N)`` total. Each half keeps input order.
    """
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    if not traces:
        raise ConfigError("cannot split an empty trace list")
    if any(t.label is None for t in traces):
        raise ConfigError("every trace needs a label before splitting")
    ids = [t.case_id for t in traces]
    if len(set(ids)) != len(ids):
        raise ConfigError("case ids must be unique to split by case")

    pos = [i for i, t in enumerate(traces) if t.label]
    neg = [i for i, t in enumerate(traces) if not t.label]
    for name, idx in (("positive", pos), ("negative", neg)):
        if len(idx) < 2:
            raise ConfigError(f"cannot stratify: only {len(idx)} {name} trace(s)")

    n_pos = min(max(_cut(len(pos), fraction), 1), len(pos) - 1)
    n_neg = min(max(_cut(len(traces), fraction) - n_pos, 1), len(neg) - 1)

    rng = seeded_rng(seed)
    pos_perm = [pos[i] for i in rng.permutation(len(pos))]
    neg_perm = [neg[i] for i in rng.permutation(len(neg))]
    train_idx = set(pos_perm[:n_pos]) | set(neg_perm[:n_neg])
    training = [t for i, t in enumerate(traces) if i in train_idx]
    validation = [t for i, t in enumerate(traces) if i not in train_idx]
    return Dataset(training, validation, seed, fraction)


_SPAN = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([hdw])\s*$", re.IGNORECASE)


def parse_span(text):
    """Parse ``14d``, ``2w`` or ``12h`` into a timedelta."""
    m = _SPAN.match(text)
    if not m:
        raise ValueError(f"bad duration {text!r}; use e.g. 7d, 2w or 12h")
    n, unit = float(m.group(1)), m.group(2).lower()
    return {"h": timedelta(hours=n), "d": timedelta(days=n), "w": timedelta(weeks=n)}[unit]


def summarize(traces):
    """Per-log statistics in the layout of the usual dataset table."""
    n = len(traces)
    positives = sum(1 for t in traces if t.label)
    return {
        "traces": n,
        "positives": positives,
        "percent_positive": round(100 * positives / n) if n else 0,
        "max_length": max((len(t.activities) for t in traces), default=0),
        "activities": len({a for t in traces for a in t.activities}),
    }
