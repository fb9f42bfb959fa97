"""GRU and LSTM layers over padded one-hot batches, with exact BPTT.

Conventions (row-major, one row per sequence):

GRU::

    z  = sigmoid(x W_z^T + h U_z^T + b_z)
    r  = sigmoid(x W_r^T + h U_r^T + b_r)
    h~ = tanh(x W_h^T + (r * h) U_h^T + b_h)
    h' = (1 - z) * h + z * h~

LSTM (no peepholes)::

    f, i, o = sigmoid(x W_* ^T + h U_* ^T + b_*)
    c~ = tanh(x W_c^T + h U_c^T + b_c)
    c' = f * c + i * c~
    h' = o * tanh(c')

A padded step (``t >= length``) carries the state through unchanged, so the
state after the last column equals the state at each sequence's own length.
The classifier head reads the top layer's final state:
``probs = softmax(h W_out^T + b_out)``.
"""
from dataclasses import dataclass

import numpy as np

from .kernels import DTYPE, check_finite, is_checked, matmul, seeded_rng, sigmoid, softmax_rows

GATES = {"gru": ("z", "r", "h"), "lstm": ("f", "i", "o", "c")}
N_CLASSES = 2


@dataclass
class CellParams:
    """Per-layer gate weights. ``layers[k]`` maps e.g. ``"W_z"`` to an array.

    ``W_*`` is ``H x input_dim`` (input_dim is V for the first layer, H above),
    ``U_*`` is ``H x H`` and ``b_*`` has length H.
    """
    cell_kind: str
    layers: list

    @property
    def hidden_size(self):
        return self.layers[0]["U_" + GATES[self.cell_kind][0]].shape[0]

    @property
    def input_size(self):
        return self.layers[0]["W_" + GATES[self.cell_kind][0]].shape[1]

    def count(self):
        return sum(a.size for layer in self.layers for a in layer.values())


@dataclass
class HeadParams:
    W_out: np.ndarray
    b_out: np.ndarray

    def count(self):
        return self.W_out.size + self.b_out.size


@dataclass
class BatchInput:
    ids: np.ndarray      # int64 [B x T_max], padded
    lengths: np.ndarray  # int64 [B]
    labels: np.ndarray   # int64 [B]

    def __post_init__(self):
        if self.ids.ndim != 2 or self.ids.shape[0] == 0:
            raise ValueError("empty batch")
        if np.any(self.lengths < 1) or np.any(self.lengths > self.ids.shape[1]):
            raise ValueError("lengths must lie in [1, T_max]")


@dataclass
class Tape:
    batch: BatchInput
    cell_kind: str
    mask: np.ndarray          # bool [T, B]
    layer_caches: list        # one list of per-step tuples per layer
    layer_outputs: list       # [T, B, H] hidden sequence per layer
    h_final: np.ndarray
    probs: np.ndarray


@dataclass
class Gradients:
    cell: CellParams
    head: HeadParams


def make_batch(encoded, pad_id=0):
    """Pad a list of :class:`~tracernn.vocab.EncodedTrace` into a BatchInput."""
    lengths = np.array([len(e.ids) for e in encoded], dtype=np.int64)
    ids = np.full((len(encoded), int(lengths.max()) if len(encoded) else 0), pad_id, dtype=np.int64)
    for row, e in enumerate(encoded):
        ids[row, :len(e.ids)] = e.ids
    labels = np.array([e.label_id for e in encoded], dtype=np.int64)
    return BatchInput(ids, lengths, labels)


def _glorot(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(cell_kind, vocab_size, hidden_size, layers=1, seed=0):
    """Glorot-uniform weight matrices, zero biases, deterministic per seed."""
    if cell_kind not in GATES:
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    if vocab_size < 2 or hidden_size < 1 or layers not in (1, 2):
        raise ValueError("need vocab_size >= 2, hidden_size >= 1, layers in {1, 2}")
    rng = seeded_rng(seed)
    out = []
    for k in range(layers):
        fan_in = vocab_size if k == 0 else hidden_size
        p = {}
        for g in GATES[cell_kind]:
            p["W_" + g] = _glorot(rng, hidden_size, fan_in)
            p["U_" + g] = _glorot(rng, hidden_size, hidden_size)
            p["b_" + g] = np.zeros(hidden_size, dtype=DTYPE)
        out.append(p)
    head = HeadParams(_glorot(rng, N_CLASSES, hidden_size), np.zeros(N_CLASSES, dtype=DTYPE))
    return CellParams(cell_kind, out), head


def zeros_like(cell, head):
    return (CellParams(cell.cell_kind, [{k: np.zeros_like(v) for k, v in p.items()} for p in cell.layers]),
            HeadParams(np.zeros_like(head.W_out), np.zeros_like(head.b_out)))


def copy_params(cell, head):
    return (CellParams(cell.cell_kind, [{k: v.copy() for k, v in p.items()} for p in cell.layers]),
            HeadParams(head.W_out.copy(), head.b_out.copy()))


def named_arrays(cell, head):
    """Flat ``name -> array`` view (same objects, not copies) in a fixed order."""
    out = {}
    for k, p in enumerate(cell.layers):
        for g in GATES[cell.cell_kind]:
            for kind in ("W_", "U_", "b_"):
                out[f"layer{k}.{kind}{g}"] = p[kind + g]
    out["head.W_out"] = head.W_out
    out["head.b_out"] = head.b_out
    return out


def _mm(a, b):
    """BLAS product normally; the fixed-order kernel in checked mode, so checked
    runs are bit-reproducible across machines."""
    return matmul(a, b) if is_checked() else a @ b


def _stack(p, prefix, gates):
    return np.concatenate([p[prefix + g] for g in gates], axis=0)


# Single-step cells shared by the step API and the batched layers. ``xp`` is the
# already-projected input (x W^T + b) for all gates, shape [B, G*H].

def _gru_cell(xp, h, U_zr, U_h):
    H = h.shape[1]
    a_zr = xp[:, :2 * H] + _mm(h, U_zr.T)
    z = sigmoid(a_zr[:, :H])
    r = sigmoid(a_zr[:, H:])
    c = np.tanh(xp[:, 2 * H:] + _mm(r * h, U_h.T))
    h_new = (1.0 - z) * h + z * c
    return h_new, (z, r, c)


def _lstm_cell(xp, h, c, U):
    H = h.shape[1]
    a = xp + _mm(h, U.T)
    f = sigmoid(a[:, :H])
    i = sigmoid(a[:, H:2 * H])
    o = sigmoid(a[:, 2 * H:3 * H])
    g = np.tanh(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (f, i, o, g, tc)


def _project(p, gates, x):
    x = np.atleast_2d(np.asarray(x, dtype=DTYPE))
    return _mm(x, _stack(p, "W_", gates).T) + _stack(p, "b_", gates)


def gru_step(p, x, h_prev):
    """One GRU step for a single input vector ``x`` (one-hot or dense)."""
    gates = GATES["gru"]
    h = np.atleast_2d(np.asarray(h_prev, dtype=DTYPE))
    U_zr = np.concatenate([p["U_z"], p["U_r"]], axis=0)
    h_new, _ = _gru_cell(_project(p, gates, x), h, U_zr, p["U_h"])
    return h_new[0]


def lstm_step(p, x, state):
    """One LSTM step; ``state`` is ``(h_prev, c_prev)``. Returns ``(h, c)``."""
    gates = GATES["lstm"]
    h_prev, c_prev = (np.atleast_2d(np.asarray(s, dtype=DTYPE)) for s in state)
    h, c, _ = _lstm_cell(_project(p, gates, x), h_prev, c_prev, _stack(p, "U_", gates))
    return h[0], c[0]


def _layer_forward(kind, p, inputs, mask, B, first):
    """Run one layer over all steps. ``inputs`` is ids [B,T] or hidden [T,B,H_in]."""
    gates = GATES[kind]
    W = _stack(p, "W_", gates)          # [G*H, in]
    b = _stack(p, "b_", gates)
    H = p["U_" + gates[0]].shape[0]
    T = mask.shape[0]
    WT = W.T
    h = np.zeros((B, H), dtype=DTYPE)
    c = np.zeros((B, H), dtype=DTYPE)
    outs = np.empty((T, B, H), dtype=DTYPE)
    cache = []
    if kind == "gru":
        U_zr = np.concatenate([p["U_z"], p["U_r"]], axis=0)
        U_h = p["U_h"]
    else:
        U = _stack(p, "U_", gates)
    for t in range(T):
        # One-hot input: the projection is a row gather, no summation involved.
        xp = (WT[inputs[:, t]] if first else _mm(inputs[t], WT)) + b
        m = mask[t][:, None]
        if kind == "gru":
            h_new, acts = _gru_cell(xp, h, U_zr, U_h)
            cache.append((h, acts))
            h = np.where(m, h_new, h)
        else:
            h_new, c_new, acts = _lstm_cell(xp, h, c, U)
            cache.append((h, c, acts))
            h = np.where(m, h_new, h)
            c = np.where(m, c_new, c)
        outs[t] = h
    return outs, cache


def forward(batch, cell, head):
    """Classify a padded batch. Returns ``(probs [B x 2], tape)``."""
    B, T = batch.ids.shape
    if B == 0:
        raise ValueError("empty batch")
    if batch.ids.min() < 0 or batch.ids.max() >= cell.input_size:
        raise ValueError(f"token id outside vocabulary of size {cell.input_size}")
    mask = (np.arange(T)[:, None] < batch.lengths[None, :])   # [T, B]
    inputs = batch.ids
    caches, outputs = [], []
    for k, p in enumerate(cell.layers):
        outs, cache = _layer_forward(cell.cell_kind, p, inputs, mask, B, first=(k == 0))
        caches.append(cache)
        outputs.append(outs)
        inputs = outs
    h_final = outputs[-1][-1]
    probs = softmax_rows(_mm(h_final, head.W_out.T) + head.b_out)
    return probs, Tape(batch, cell.cell_kind, mask, caches, outputs, h_final, probs)


def predict_proba(batch, cell, head):
    return forward(batch, cell, head)[0]


def _layer_backward(kind, p, g, cache, inputs, mask, d_out, dh_final, first):
    """Backprop one layer. ``d_out`` [T,B,H] is the gradient on each step's output
    coming from the layer above (or None). Returns gradient on the layer input
    sequence (None for the one-hot first layer)."""
    gates = GATES[kind]
    W = _stack(p, "W_", gates)
    T = mask.shape[0]
    B, H = dh_final.shape
    GH = W.shape[0]
    dh = dh_final.copy()
    dc = np.zeros_like(dh)
    da_all = np.empty((T, B, GH), dtype=DTYPE)
    dU = np.zeros((GH, H), dtype=DTYPE) if kind == "lstm" else None
    if kind == "gru":
        U_zr = np.concatenate([p["U_z"], p["U_r"]], axis=0)
        U_h = p["U_h"]
        dU_zr = np.zeros_like(U_zr)
        dU_h = np.zeros_like(U_h)
    else:
        U = _stack(p, "U_", gates)
    for t in range(T - 1, -1, -1):
        if d_out is not None:
            dh = dh + d_out[t]
        m = mask[t][:, None]
        if kind == "gru":
            h_prev, (z, r, c) = cache[t]
            dz = dh * (c - h_prev)
            dcand = dh * z
            dhp = dh * (1.0 - z)
            da_c = dcand * (1.0 - c * c) * m
            d_rh = _mm(da_c, U_h)
            dhp = dhp + d_rh * r
            dr = d_rh * h_prev
            da_zr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1) * m
            dhp = dhp + _mm(da_zr, U_zr)
            dU_zr += _mm(da_zr.T, h_prev)
            dU_h += _mm(da_c.T, r * h_prev)
            da_all[t] = np.concatenate([da_zr, da_c], axis=1)
            dh = np.where(m, dhp, dh)
        else:
            h_prev, c_prev, (f, i, o, gg, tc) = cache[t]
            do = dh * tc
            dcn = dc + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dcn * c_prev * f * (1.0 - f),
                dcn * gg * i * (1.0 - i),
                do * o * (1.0 - o),
                dcn * i * (1.0 - gg * gg),
            ], axis=1) * m
            dU += _mm(da.T, h_prev)
            da_all[t] = da
            dh = np.where(m, _mm(da, U), dh)
            dc = np.where(m, dcn * f, dc)

    flat = da_all.reshape(T * B, GH)
    if first:
        dWT = np.zeros((W.shape[1], GH), dtype=DTYPE)
        np.add.at(dWT, inputs.T.reshape(-1), flat)
        dW = dWT.T
        d_in = None
    else:
        x = inputs.reshape(T * B, -1)
        dW = _mm(flat.T, x)
        d_in = _mm(flat, W).reshape(T, B, -1)
    db = flat.sum(axis=0)
    for k, gate in enumerate(gates):
        sl = slice(k * H, (k + 1) * H)
        g["W_" + gate][...] = dW[sl]
        g["b_" + gate][...] = db[sl]
        if kind == "lstm":
            g["U_" + gate][...] = dU[sl]
    if kind == "gru":
        g["U_z"][...] = dU_zr[:H]
        g["U_r"][...] = dU_zr[H:]
        g["U_h"][...] = dU_h
    return d_in


def backward(tape, grad_logits, cell, head):
    """Exact gradients of whatever loss produced ``grad_logits`` [B x 2].

    For the batch-mean cross-entropy pass ``(probs - onehot(labels)) / B``.
    """
    grad_logits = np.asarray(grad_logits, dtype=DTYPE)
    B = tape.batch.ids.shape[0]
    if grad_logits.shape != (B, N_CLASSES):
        raise ValueError(f"grad_logits shape {grad_logits.shape} does not match tape batch ({B}, 2)")
    if tape.cell_kind != cell.cell_kind or len(tape.layer_caches) != len(cell.layers):
        raise ValueError("tape was recorded with a different model")
    gcell, ghead = zeros_like(cell, head)
    ghead.W_out[...] = _mm(grad_logits.T, tape.h_final)
    ghead.b_out[...] = grad_logits.sum(axis=0)
    dh_final = _mm(grad_logits, head.W_out)
    d_out = None
    for k in range(len(cell.layers) - 1, -1, -1):
        inputs = tape.batch.ids if k == 0 else tape.layer_outputs[k - 1]
        d_out_next = _layer_backward(
            cell.cell_kind, cell.layers[k], gcell.layers[k], tape.layer_caches[k],
            inputs, tape.mask, d_out, dh_final, first=(k == 0))
        # Only the top layer's final state reaches the head directly.
        dh_final = np.zeros_like(dh_final)
        d_out = d_out_next
    return Gradients(gcell, ghead)


def check_params(cell, head):
    for name, a in named_arrays(cell, head).items():
        check_finite(a, name)
