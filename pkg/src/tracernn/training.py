"""Training loop, run configuration and model persistence."""
import hashlib
import json
import os
import struct
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import cells
from .cells import copy_params, init_params, make_batch, named_arrays
from .errors import ConfigError, IntegrityError, ModelFormatError, UnsupportedVersionError
from .evaluation import DEFAULT_FRACTIONS, evaluate, prefix_encoded
from .kernels import seeded_rng
from .optim import AdamState, adam_update, clip_by_global_norm, cross_entropy, cross_entropy_grad
from .vocab import Vocabulary, build, encode, encode_all

FORMAT_VERSION = 1
MAGIC = b"TRACERNN-MODEL"


@dataclass
class TrainConfig:
    cell_kind: str = "gru"
    hidden_size: int = 32
    layers: int = 1
    vocab_size: Optional[int] = None
    truncate_unk_runs: bool = False
    batch_size: int = 256
    iterations: int = 50
    traces_per_iteration: int = 100_000
    learning_rate: float = 0.001
    clip_norm: float = 5.0
    seed: int = 0
    prefix_fractions: tuple = DEFAULT_FRACTIONS
    train_prefix_fraction: float = 100

    def __post_init__(self):
        self.prefix_fractions = tuple(self.prefix_fractions)
        if self.cell_kind not in cells.GATES:
            raise ConfigError(f"cell kind must be gru or lstm, got {self.cell_kind!r}")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        if self.layers not in (1, 2):
            raise ConfigError("layers must be 1 or 2")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.iterations < 1 or self.traces_per_iteration < 1:
            raise ConfigError("iterations and traces_per_iteration must be >= 1")
        if self.vocab_size is not None and self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive when set")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if not self.prefix_fractions:
            raise ConfigError("need at least one evaluation prefix fraction")
        for f in (*self.prefix_fractions, self.train_prefix_fraction):
            if not 0 < f <= 100:
                raise ConfigError(f"prefix fractions must be in (0, 100], got {f}")

    @property
    def selection_fraction(self):
        """Fraction whose validation accuracy picks the reported snapshot."""
        return max(self.prefix_fractions)

    def to_dict(self):
        d = asdict(self)
        d["prefix_fractions"] = list(self.prefix_fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ModelBundle:
    config: TrainConfig
    vocab: Vocabulary
    cell: cells.CellParams
    head: cells.HeadParams
    history: list = field(default_factory=list)
    best_iteration: int = 0
    format_version: int = FORMAT_VERSION

    def encode_tokens(self, tokens):
        from .eventlog import Trace
        return encode(Trace("", list(tokens)), self.vocab, self.config.truncate_unk_runs)


def _presentation_stream(n, rng):
    """Endless index stream over a reshuffled training set (one permutation per epoch)."""
    while True:
        yield from rng.permutation(n).tolist()


def train(dataset, config, progress: Optional[Callable] = None):
    """Train on ``dataset.training`` and score ``dataset.validation`` after every iteration.

    Returns ``(bundle, reports)``; the bundle holds the parameters from the
    iteration with the best validation accuracy at ``config.selection_fraction``
    (earliest wins ties).
    """
    run_start = time.perf_counter()
    if not dataset.training or not dataset.validation:
        raise ConfigError("training and validation sets must both be non-empty")
    vocab = build(dataset.training, config.vocab_size)
    if len(vocab) < 2:
        raise ConfigError("vocabulary has no activity tokens")
    if config.vocab_size is not None and len(vocab) > config.vocab_size + 1:
        raise ConfigError("vocabulary larger than configured vocab_size")

    train_enc = encode_all(dataset.training, vocab, config.truncate_unk_runs)
    if config.train_prefix_fraction < 100:
        train_enc = [prefix_encoded(e, config.train_prefix_fraction) for e in train_enc]
    val_enc = encode_all(dataset.validation, vocab, config.truncate_unk_runs)

    cell, head = init_params(config.cell_kind, len(vocab), config.hidden_size,
                             config.layers, config.seed)
    params = named_arrays(cell, head)
    adam = AdamState(lr=config.learning_rate)
    stream = _presentation_stream(len(train_enc), seeded_rng([config.seed, 1]))

    reports, history = [], []
    best = None
    sel = config.selection_fraction
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        remaining = config.traces_per_iteration
        loss_sum, n_batches, presented = 0.0, 0, 0
        while remaining > 0:
            bs = min(config.batch_size, remaining)
            batch = make_batch([train_enc[next(stream)] for _ in range(bs)])
            probs, tape = cells.forward(batch, cell, head)
            loss_sum += cross_entropy(probs, batch.labels)
            g = cells.backward(tape, cross_entropy_grad(probs, batch.labels), cell, head)
            grads, _ = clip_by_global_norm(named_arrays(g.cell, g.head), config.clip_norm)
            adam_update(params, grads, adam)
            remaining -= bs
            presented += bs
            n_batches += 1
        train_seconds = time.perf_counter() - t0

        t1 = time.perf_counter()
        model = _Snapshot(cell, head)
        report = evaluate(model, val_enc, config.prefix_fractions, iteration=it)
        report.train_seconds = train_seconds
        report.eval_seconds = time.perf_counter() - t1
        reports.append(report)

        acc = report.accuracy_at[sel]
        summary = {"iteration": it, "presentations": presented, "batches": n_batches,
                   "mean_loss": loss_sum / n_batches, "accuracy": acc, "auroc": report.auroc_at[sel],
                   "train_seconds": train_seconds, "eval_seconds": report.eval_seconds}
        history.append(summary)
        if best is None or acc > best[0]:
            best = (acc, it, copy_params(cell, head))
        if progress is not None:
            progress({"event": "iteration", **summary})

    _, best_it, (bcell, bhead) = best
    bundle = ModelBundle(config, vocab, bcell, bhead, history, best_it)
    if progress is not None:
        progress({"event": "done", "best_iteration": best_it,
                  "total_seconds": time.perf_counter() - run_start})
    return bundle, reports


def train_on_prefixes(dataset, config, fraction=50, progress=None):
    """:func:`train` with every training presentation cut to its leading ``fraction``%."""
    cfg = TrainConfig.from_dict({**config.to_dict(), "train_prefix_fraction": fraction})
    return train(dataset, cfg, progress)


@dataclass
class _Snapshot:
    cell: cells.CellParams
    head: cells.HeadParams


# Persistence. Layout:
#   line 1  b"TRACERNN-MODEL <version>\n"
#   line 2  JSON header (config, vocabulary tokens, history, block names/shapes)
#   line 3  sha256 hex digest over line 2 and the payload
#   payload per block, in header order: uint64 LE count, then count float64 LE.

def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def dumps(bundle):
    arrays = named_arrays(bundle.cell, bundle.head)
    header = {
        "config": bundle.config.to_dict(),
        "vocabulary": bundle.vocab.tokens,
        "vocab_max_size": bundle.vocab.max_size,
        "best_iteration": bundle.best_iteration,
        "history": bundle.history,
        "blocks": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
    }
    head_bytes = json.dumps(header, sort_keys=True, default=_json_default).encode("utf-8")
    payload = bytearray()
    for a in arrays.values():
        payload += struct.pack("<Q", a.size)
        payload += np.ascontiguousarray(a, dtype="<f8").tobytes()
    digest = hashlib.sha256(head_bytes + b"\n" + bytes(payload)).hexdigest().encode("ascii")
    return (MAGIC + b" " + str(FORMAT_VERSION).encode("ascii") + b"\n"
            + head_bytes + b"\n" + digest + b"\n" + bytes(payload))


def loads(data):
    nl = data.find(b"\n")
    first = data[:nl] if nl >= 0 else data
    parts = first.split(b" ")
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ModelFormatError("not a tracernn model file")
    try:
        version = int(parts[1])
    except ValueError:
        raise ModelFormatError("unreadable format version") from None
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(version, FORMAT_VERSION)

    rest = data[nl + 1:]
    nl2 = rest.find(b"\n")
    nl3 = rest.find(b"\n", nl2 + 1) if nl2 >= 0 else -1
    if nl2 < 0 or nl3 < 0:
        raise IntegrityError("model file truncated in header")
    head_bytes, digest, payload = rest[:nl2], rest[nl2 + 1:nl3], rest[nl3 + 1:]
    if hashlib.sha256(head_bytes + b"\n" + payload).hexdigest().encode("ascii") != digest:
        raise IntegrityError("model file checksum mismatch (corrupt or truncated)")
    try:
        header = json.loads(head_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"unreadable model header: {e}") from None

    config = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary(header["vocabulary"], header["vocab_max_size"])
    cell, head = init_params(config.cell_kind, len(vocab), config.hidden_size, config.layers, 0)
    arrays = named_arrays(cell, head)
    off = 0
    for block in header["blocks"]:
        name, shape = block["name"], tuple(block["shape"])
        if name not in arrays or arrays[name].shape != shape:
            raise IntegrityError(f"block {name} {shape} does not match the configured model")
        (count,) = struct.unpack_from("<Q", payload, off)
        off += 8
        if count != int(np.prod(shape)) or off + 8 * count > len(payload):
            raise IntegrityError(f"block {name} has the wrong length")
        arrays[name][...] = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
    if off != len(payload) or len(header["blocks"]) != len(arrays):
        raise IntegrityError("payload does not match block list")
    return ModelBundle(config, vocab, cell, head, header["history"], header["best_iteration"], version)


def atomic_write_bytes(path, data):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(bundle, path):
    atomic_write_bytes(path, dumps(bundle))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
