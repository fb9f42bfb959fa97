"""Frequency-ranked activity vocabularies and integer encoding of traces."""
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

UNK_ID = 0
UNK_TOKEN = "<unk>"
LABEL_IDS = {False: 0, True: 1}


@dataclass(frozen=True)
class EncodedTrace:
    ids: tuple
    label_id: int


class Vocabulary:
    """Token-to-id map with id 0 reserved for unknown activities.

    Retained tokens are ranked by training frequency (most frequent gets id 1);
    ties go to the token seen first in the training stream.
    """

    def __init__(self, tokens, max_size=None):
        self.id_to_token = [UNK_TOKEN, *tokens]
        self.token_to_id = {t: i for i, t in enumerate(tokens, start=1)}
        if len(self.token_to_id) != len(tokens):
            raise ConfigError("duplicate token in vocabulary")
        self.max_size = max_size
        self.unk_id = UNK_ID

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return (isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token
                and self.max_size == other.max_size)

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, max_size={self.max_size})"

    @property
    def tokens(self):
        """Retained activity tokens in id order (id = position + 1)."""
        return self.id_to_token[1:]

    def lookup(self, token):
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]


def build(training_traces, max_size: Optional[int] = None) -> Vocabulary:
    if max_size is not None and max_size < 1:
        raise ConfigError(f"vocabulary max_size must be positive, got {max_size}")
    counts = Counter()
    first_seen = {}
    for trace in training_traces:
        for tok in trace.activities:
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary(ranked, max_size)


def collapse_unk_runs(ids):
    out = []
    for i in ids:
        if i == UNK_ID and out and out[-1] == UNK_ID:
            continue
        out.append(i)
    return out


def encode(trace, vocab, truncate_unk_runs=False) -> EncodedTrace:
    ids = [vocab.lookup(t) for t in trace.activities]
    if truncate_unk_runs:
        ids = collapse_unk_runs(ids)
    label = LABEL_IDS[bool(trace.label)] if trace.label is not None else 0
    return EncodedTrace(tuple(ids), label)


def encode_all(traces, vocab, truncate_unk_runs=False):
    return [encode(t, vocab, truncate_unk_runs) for t in traces]


def one_hot(i, size):
    if not 0 <= i < size:
        raise IndexError(f"id {i} outside vocabulary of size {size}")
    v = np.zeros(size)
    v[i] = 1.0
    return v
