"""Constructed trace languages with a known labeling rule, for sanity runs."""
from .eventlog import Trace
from .kernels import seeded_rng

MARKER = "K"


def contains_marker(n=2000, positive_rate=0.25, n_tokens=10, min_len=3, max_len=15, seed=0):
    """Traces over ``n_tokens`` activities labeled True iff ``K`` occurs.

    Exactly ``round(positive_rate * n)`` traces are positive; the marker is
    placed at a uniformly random position. Negatives never contain it.
    """
    if n_tokens < 2:
        raise ValueError("need at least one filler token besides the marker")
    rng = seeded_rng(seed)
    fillers = [chr(ord("A") + i) for i in range(n_tokens - 1)]
    if MARKER in fillers:
        fillers = [f"T{i}" for i in range(n_tokens - 1)]
    n_pos = round(positive_rate * n)
    labels = [True] * n_pos + [False] * (n - n_pos)
    labels = [labels[i] for i in rng.permutation(n)]
    traces = []
    for k, label in enumerate(labels):
        length = int(rng.integers(min_len, max_len + 1))
        acts = [fillers[i] for i in rng.integers(0, len(fillers), size=length)]
        if label:
            acts[int(rng.integers(0, length))] = MARKER
        traces.append(Trace(f"s{k}", acts, label))
    return traces
