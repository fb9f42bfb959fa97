import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracernn import cells
from tracernn.optim import cross_entropy_grad
from tracernn.vocab import EncodedTrace, one_hot
from oracles import (finite_difference_grads, relative_error, scalar_gru_step,
                     scalar_lstm_step)


def zeroed(kind, V=4, H=3, layers=1):
    cell, head = cells.init_params(kind, V, H, layers, 0)
    for a in cells.named_arrays(cell, head).values():
        a[...] = 0.0
    return cell, head


def randomized(kind, V, H, layers, seed, scale=0.8):
    rng = np.random.default_rng(seed)
    cell, head = cells.init_params(kind, V, H, layers, seed)
    for a in cells.named_arrays(cell, head).values():
        a[...] = rng.uniform(-scale, scale, a.shape)
    return cell, head


def random_batch(rng, V, lengths):
    return cells.make_batch([EncodedTrace(tuple(rng.integers(0, V, size=L).tolist()),
                                          int(rng.integers(0, 2))) for L in lengths])


def test_gru_zero_fixed_point():
    cell, _ = zeroed("gru")
    h = cells.gru_step(cell.layers[0], one_hot(1, 4), np.zeros(3))
    assert np.array_equal(h, np.zeros(3))


def test_gru_update_gate_saturated_copies_candidate():
    cell, _ = randomized("gru", 4, 3, 1, 1)
    p = cell.layers[0]
    for k in p:
        if k != "W_h" and k != "U_h":
            p[k][...] = 0.0
    p["b_z"][...] = 1000.0
    x, h_prev = one_hot(2, 4), np.array([0.3, -0.2, 0.5])
    cand = np.tanh(p["W_h"] @ x + p["U_h"] @ (0.5 * h_prev))
    assert np.allclose(cells.gru_step(p, x, h_prev), cand, atol=1e-12, rtol=0)


def test_lstm_zero_state():
    cell, _ = zeroed("lstm")
    h, c = cells.lstm_step(cell.layers[0], one_hot(0, 4), (np.zeros(3), np.zeros(3)))
    assert np.array_equal(h, np.zeros(3)) and np.array_equal(c, np.zeros(3))


def test_lstm_forget_gate_saturation_keeps_memory():
    cell, _ = zeroed("lstm")
    p = cell.layers[0]
    p["b_f"][...] = 1000.0
    p["b_i"][...] = -1000.0
    c_prev = np.array([0.7, -1.3, 2.0])
    _, c = cells.lstm_step(p, one_hot(3, 4), (np.array([0.1, 0.2, 0.3]), c_prev))
    assert np.allclose(c, c_prev, atol=1e-12, rtol=0)


@pytest.mark.parametrize("seed", range(5))
def test_steps_match_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    V, H = 6, 4
    x = one_hot(int(rng.integers(0, V)), V)
    h, c = rng.uniform(-1, 1, H), rng.uniform(-2, 2, H)
    g, _ = randomized("gru", V, H, 1, seed)
    assert np.allclose(cells.gru_step(g.layers[0], x, h),
                       scalar_gru_step(g.layers[0], x.tolist(), h.tolist()), atol=1e-12, rtol=0)
    ls, _ = randomized("lstm", V, H, 1, seed)
    h2, c2 = cells.lstm_step(ls.layers[0], x, (h, c))
    rh, rc = scalar_lstm_step(ls.layers[0], x.tolist(), h.tolist(), c.tolist())
    assert np.allclose(h2, rh, atol=1e-12, rtol=0) and np.allclose(c2, rc, atol=1e-12, rtol=0)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_zero_model_is_symmetric(kind):
    cell, head = zeroed(kind)
    probs, _ = cells.forward(cells.make_batch([EncodedTrace((1,), 0)]), cell, head)
    assert probs.tolist() == [[0.5, 0.5]]


@pytest.mark.parametrize("kind", ["gru", "lstm"])
@pytest.mark.parametrize("layers", [1, 2])
def test_padding_is_invisible_bitwise(kind, layers):
    cell, head = randomized(kind, 7, 5, layers, 3)
    seq = EncodedTrace((1, 4, 2), 1)
    alone = cells.forward(cells.make_batch([seq]), cell, head)[0]
    padded = cells.BatchInput(np.array([[1, 4, 2, 6, 6, 3]]), np.array([3]), np.array([1]))
    assert np.array_equal(cells.forward(padded, cell, head)[0], alone)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_batching_equivalence(kind):
    rng = np.random.default_rng(0)
    cell, head = randomized(kind, 7, 5, 1, 0)
    batch = random_batch(rng, 7, [3, 9, 1, 4, 7, 2, 5, 6])
    probs = cells.forward(batch, cell, head)[0]
    for i in range(8):
        one = cells.BatchInput(batch.ids[i:i + 1, :batch.lengths[i]], batch.lengths[i:i + 1],
                               batch.labels[i:i + 1])
        assert np.allclose(cells.forward(one, cell, head)[0], probs[i], atol=1e-12, rtol=0)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        cells.BatchInput(np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64),
                         np.zeros(0, dtype=np.int64))


def _analytic(batch, cell, head):
    probs, tape = cells.forward(batch, cell, head)
    g = cells.backward(tape, cross_entropy_grad(probs, batch.labels), cell, head)
    return cells.named_arrays(g.cell, g.head)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
@pytest.mark.parametrize("layers", [1, 2])
@pytest.mark.parametrize("lengths", [(4, 4, 4), (4, 2, 3)], ids=["full", "padded"])
def test_gradients_match_finite_differences(kind, layers, lengths):
    rng = np.random.default_rng(11)
    cell, head = randomized(kind, 7, 5, layers, 11)
    batch = random_batch(rng, 7, lengths)
    analytic = _analytic(batch, cell, head)
    numeric = finite_difference_grads(batch, cell, head)
    # Two-layer LSTMs produce components around 1e-7 where central differences
    # only carry ~1e-12 absolute accuracy, hence the larger floor there.
    floor = 1e-8 if layers == 1 else 1e-6
    for name in analytic:
        err = relative_error(analytic[name], numeric[name], floor)
        assert err.max() < 1e-5, name


def test_padding_steps_contribute_nothing():
    rng = np.random.default_rng(2)
    cell, head = randomized("gru", 7, 5, 1, 2)
    batch = random_batch(rng, 7, [2])
    padded = cells.BatchInput(np.concatenate([batch.ids, [[5, 6, 5]]], axis=1), batch.lengths,
                              batch.labels)
    a, b = _analytic(batch, cell, head), _analytic(padded, cell, head)
    for k in a:
        assert np.allclose(a[k], b[k], atol=1e-15, rtol=0), k


def test_head_bias_gradient_zero_at_exact_match():
    cell, head = randomized("gru", 5, 4, 1, 0)
    batch = random_batch(np.random.default_rng(0), 5, [3, 2])
    probs, tape = cells.forward(batch, cell, head)
    # Soft target equal to the prediction: d(loss)/d(logits) = (p - q) / B = 0.
    g = cells.backward(tape, (probs - probs) / 2, cell, head)
    assert np.all(np.abs(g.head.b_out) <= 1e-12)


def test_backward_rejects_mismatched_tape():
    cell, head = randomized("gru", 5, 4, 1, 0)
    batch = random_batch(np.random.default_rng(0), 5, [3, 2])
    _, tape = cells.forward(batch, cell, head)
    with pytest.raises(ValueError):
        cells.backward(tape, np.zeros((3, 2)), cell, head)
    other, ohead = randomized("lstm", 5, 4, 1, 0)
    with pytest.raises(ValueError):
        cells.backward(tape, np.zeros((2, 2)), other, ohead)


def test_init_deterministic():
    a = cells.named_arrays(*cells.init_params("gru", 9, 4, 2, 5))
    b = cells.named_arrays(*cells.init_params("gru", 9, 4, 2, 5))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = cells.named_arrays(*cells.init_params("gru", 9, 4, 2, 6))
    assert not np.array_equal(a["layer0.W_z"], c["layer0.W_z"])


def test_init_ranges():
    cell, head = cells.init_params("lstm", 36, 32, 1, 0)
    p = cell.layers[0]
    assert np.abs(p["W_f"]).max() <= np.sqrt(6 / (36 + 32))
    assert np.abs(p["U_f"]).max() <= np.sqrt(6 / 64)
    assert not p["b_f"].any() and not head.b_out.any()


def test_parameter_counts():
    cell, head = cells.init_params("gru", 36, 32, 1, 0)
    assert cell.count() == 3 * (32 * 36 + 32 * 32 + 32) == 6624
    assert head.count() == 66
    for V, H, L in [(36, 32, 1), (7, 5, 2), (625, 32, 1)]:
        g = cells.init_params("gru", V, H, L, 0)[0].count()
        ls = cells.init_params("lstm", V, H, L, 0)[0].count()
        assert ls * 3 == g * 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.integers(1, 12), min_size=1, max_size=5))
def test_gru_hidden_state_in_open_interval(seed, lengths):
    rng = np.random.default_rng(seed)
    cell, head = randomized("gru", 6, 4, 1, seed, scale=3.0)
    _, tape = cells.forward(random_batch(rng, 6, lengths), cell, head)
    hs = tape.layer_outputs[0]
    assert np.all(np.abs(hs) < 1.0)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_checked_mode_uses_fixed_order_products(kind):
    from tracernn import kernels
    rng = np.random.default_rng(11)
    cell, head = randomized(kind, 6, 4, 2, 11)
    batch = random_batch(rng, 6, [5, 2, 4])

    def run():
        probs, tape = cells.forward(batch, cell, head)
        g = cells.backward(tape, cross_entropy_grad(probs, batch.labels), cell, head)
        return probs, cells.named_arrays(g.cell, g.head)

    fast_p, fast_g = run()
    kernels.set_checked(True)
    try:
        slow_p, slow_g = run()
        again_p, again_g = run()
    finally:
        kernels.set_checked(False)
    assert np.array_equal(slow_p, again_p)
    assert np.allclose(slow_p, fast_p, rtol=0, atol=1e-12)
    for k in fast_g:
        assert np.array_equal(slow_g[k], again_g[k])
        assert np.allclose(slow_g[k], fast_g[k], rtol=0, atol=1e-12)
