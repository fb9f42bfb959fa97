import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracernn import vocab
from tracernn.errors import ConfigError
from tracernn.eventlog import Trace


def tr(*acts, label=False):
    return Trace("x", list(acts), label)


def test_frequency_ranking_and_cap():
    v = vocab.build([tr("A", "A", "B", "C", "C", "C")], max_size=2)
    assert v.token_to_id == {"C": 1, "A": 2}
    assert v.lookup("B") == vocab.UNK_ID
    assert len(v) == 3


def test_ties_broken_by_first_occurrence():
    v = vocab.build([tr("B", "A"), tr("A", "B", "C")])
    assert v.tokens == ["B", "A", "C"]


def test_zero_max_size_rejected():
    with pytest.raises(ConfigError):
        vocab.build([tr("A")], max_size=0)


def test_encode_with_and_without_truncation():
    v = vocab.build([tr("A", "B")])
    t = tr("A", "X", "Y", "Z", "B")
    a, b = v.lookup("A"), v.lookup("B")
    assert vocab.encode(t, v).ids == (a, 0, 0, 0, b)
    assert vocab.encode(t, v, truncate_unk_runs=True).ids == (a, 0, b)


def test_all_unknown_collapses_to_one():
    v = vocab.build([tr("A")])
    assert vocab.encode(tr(*"QRSTUVW"), v, True).ids == (0,)


def test_label_ids():
    v = vocab.build([tr("A")])
    assert vocab.encode(tr("A", label=True), v).label_id == 1
    assert vocab.encode(tr("A", label=False), v).label_id == 0


def test_one_hot():
    assert vocab.one_hot(2, 4).tolist() == [0, 0, 1, 0]
    assert vocab.one_hot(0, 1).tolist() == [1]
    with pytest.raises(IndexError):
        vocab.one_hot(4, 4)


tokens = st.lists(st.sampled_from("ABCDEFGH"), min_size=1, max_size=12)


@given(st.lists(tokens, min_size=1, max_size=8), st.integers(1, 10))
def test_one_hot_sums_to_one(seqs, cap):
    v = vocab.build([tr(*s) for s in seqs], cap)
    for s in seqs:
        for i in vocab.encode(tr(*s), v).ids:
            assert vocab.one_hot(i, len(v)).sum() == 1.0


@given(st.lists(tokens, min_size=1, max_size=8))
def test_decode_round_trip_unlimited(seqs):
    v = vocab.build([tr(*s) for s in seqs])
    for s in seqs:
        assert v.decode(vocab.encode(tr(*s), v).ids) == s


@given(st.lists(tokens, min_size=1, max_size=8), tokens, st.integers(1, 4))
def test_truncation_properties(seqs, probe, cap):
    v = vocab.build([tr(*s) for s in seqs], cap)
    full = vocab.encode(tr(*probe), v).ids
    cut = vocab.encode(tr(*probe), v, True).ids
    assert len(cut) <= len(full)
    assert not any(a == b == 0 for a, b in zip(cut, cut[1:]))
    assert [i for i in cut if i] == [i for i in full if i]
    assert all(0 <= i < len(v) for i in cut)
    assert len(v) <= cap + 1


@given(st.lists(tokens, min_size=1, max_size=8), st.one_of(st.none(), st.integers(1, 5)))
def test_build_is_deterministic_and_ranked(seqs, cap):
    traces = [tr(*s) for s in seqs]
    v1, v2 = vocab.build(traces, cap), vocab.build(traces, cap)
    assert v1 == v2
    counts = {}
    for s in seqs:
        for a in s:
            counts[a] = counts.get(a, 0) + 1
    freqs = [counts[t] for t in v1.tokens]
    assert freqs == sorted(freqs, reverse=True)
    assert v1.id_to_token[0] == vocab.UNK_TOKEN
    assert list(range(len(v1))) == sorted([0, *v1.token_to_id.values()])
