import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_net
from oracles import kahan_mse, naive_matmul
from proapt.numerics import (
    AdamState,
    LstmParams,
    ShapeError,
    adam_step,
    grad_check,
    lstm_cell_backward,
    lstm_cell_forward,
    matmul,
    mse_loss,
    qnet_backward,
    qnet_forward,
    sigmoid,
    softmax,
)

finite = st.floats(-100, 100, allow_nan=False)


# -- matmul -----------------------------------------------------------------

def test_matmul_identity():
    m = np.array([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_row_by_column():
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a.tolist(), b.tolist()), rtol=1e-13)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


# -- softmax ----------------------------------------------------------------

def test_softmax_uniform():
    np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_no_overflow():
    out = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_empty():
    with pytest.raises(ValueError):
        softmax(np.array([]))


@given(arrays(np.float64, st.integers(1, 20), elements=finite), finite)
def test_softmax_shift_invariant(v, c):
    np.testing.assert_allclose(softmax(v + c), softmax(v), rtol=1e-9, atol=1e-15)


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_softmax_is_a_distribution(v):
    p = softmax(v)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all((p >= 0) & (p <= 1))
    # strictly inside (0, 1) whenever 1 - p does not round away in float64
    if v.size > 1 and np.ptp(v) < 30:
        assert np.all((p > 0) & (p < 1))


# -- LSTM cell --------------------------------------------------------------

def _zero_params(n_in, hidden):
    return LstmParams(np.zeros((n_in, 4 * hidden)), np.zeros((hidden, 4 * hidden)),
                      np.zeros(4 * hidden))


def test_lstm_zero_params_give_zero_state():
    p = _zero_params(3, 2)
    h, c, cache = lstm_cell_forward(np.ones(3), np.zeros(2), np.zeros(2), p)
    assert np.array_equal(h, np.zeros(2)) and np.array_equal(c, np.zeros(2))
    np.testing.assert_array_equal(cache.gates[:6], 0.5)


def test_lstm_shape_error():
    with pytest.raises(ShapeError):
        lstm_cell_forward(np.ones(4), np.zeros(2), np.zeros(2), _zero_params(3, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), arrays(np.float64, 3, elements=st.floats(-50, 50)))
def test_lstm_hidden_state_bounded(seed, x):
    net = random_net(seed, n_in=3, hidden=4)
    rng = np.random.default_rng(seed)
    h, _, _ = lstm_cell_forward(x, rng.uniform(-1, 1, 4), rng.normal(0, 3, 4), net.lstm)
    assert np.all(np.abs(h) < 1)


def test_lstm_cell_gradient_matches_finite_differences(rng):
    net = random_net(7, n_in=4, hidden=3)
    p = net.lstm
    x, h0, c0 = rng.normal(size=4), rng.normal(size=3), rng.normal(size=3)
    wh, wc = rng.normal(size=3), rng.normal(size=3)

    def scalar():
        h, c, _ = lstm_cell_forward(x, h0, c0, p)
        return h @ wh + c @ wc

    _, _, cache = lstm_cell_forward(x, h0, c0, p)
    grads, dx, dh0, dc0 = lstm_cell_backward(wh, wc, cache, p)
    checks = [(p.w_ih, grads["w_ih"]), (p.w_hh, grads["w_hh"]), (p.b, grads["b"]),
              (x, dx), (h0, dh0), (c0, dc0)]
    eps = 1e-5
    for arr, g in checks:
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            up = scalar()
            flat[j] = old - eps
            down = scalar()
            flat[j] = old
            num = (up - down) / (2 * eps)
            assert abs(num - gflat[j]) / max(abs(num), abs(gflat[j]), 1e-6) < 1e-4


# -- Q-network --------------------------------------------------------------

def test_single_action_network():
    net = random_net(1, n_in=4, hidden=3, n_act=1)
    q, _ = qnet_forward(net, np.ones((2, 4)))
    assert q.shape == (2, 1)


def test_forward_is_deterministic(rng):
    net = random_net(2)
    seq = rng.normal(size=(5, 4))
    a, _ = qnet_forward(net, seq)
    b, _ = qnet_forward(net, seq.copy())
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("position", ["pre_fc", "none"])
def test_forward_equals_manual_composition(rng, position):
    net = random_net(3, n_in=4, hidden=3, n_act=2, softmax_position=position)
    seq = rng.normal(size=(3, 4))
    q, _ = qnet_forward(net, seq)
    h = c = np.zeros(3)
    for t in range(3):
        h, c, _ = lstm_cell_forward(seq[t], h, c, net.lstm)
        p = softmax(h) if position == "pre_fc" else h
        np.testing.assert_allclose(q[t], p @ net.dense.w + net.dense.b, rtol=1e-12, atol=1e-14)


def test_forward_rejects_wrong_width():
    with pytest.raises(ShapeError):
        qnet_forward(random_net(0), np.ones((2, 5)))


def test_backward_zero_dq_gives_zero_gradients(rng):
    net = random_net(4)
    _, cache = qnet_forward(net, rng.normal(size=(4, 4)))
    for g in qnet_backward(cache, np.zeros((4, 2))).values():
        assert not g.any()


def test_backward_length_mismatch(rng):
    net = random_net(4)
    _, cache = qnet_forward(net, rng.normal(size=(4, 4)))
    with pytest.raises(ValueError):
        qnet_backward(cache, np.zeros((3, 2)))


def test_backward_single_step_hand_chain_rule(rng):
    net = random_net(5, n_in=4, hidden=3, n_act=2)
    x, dq = rng.normal(size=4), rng.normal(size=2)
    _, cache = qnet_forward(net, x[None, :])
    got = qnet_backward(cache, dq[None, :])

    h, c, cell = lstm_cell_forward(x, np.zeros(3), np.zeros(3), net.lstm)
    p = softmax(h)
    jac = np.diag(p) - np.outer(p, p)  # d softmax / d h
    dp = net.dense.w @ dq
    dh = jac @ dp
    g, _, _, _ = lstm_cell_backward(dh, np.zeros(3), cell, net.lstm)
    np.testing.assert_allclose(got["dense.w"], np.outer(p, dq), rtol=1e-12)
    np.testing.assert_allclose(got["dense.b"], dq, rtol=1e-12)
    for k in ("w_ih", "w_hh", "b"):
        np.testing.assert_allclose(got[f"lstm.{k}"], g[k], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("position", ["pre_fc", "none"])
def test_backward_matches_finite_differences(rng, position):
    net = random_net(6, n_in=5, hidden=4, n_act=3, softmax_position=position)
    seq = rng.normal(size=(4, 5))
    dq = rng.normal(size=(4, 3))
    assert grad_check(net, seq, dq) < 1e-4


# -- loss and optimizer -----------------------------------------------------

def test_mse_zero_when_equal():
    loss, dq = mse_loss([0.3, 0.7], [0.3, 0.7])
    assert loss == 0.0 and not dq.any()


def test_mse_simple_value():
    loss, dq = mse_loss([1.0, 0.0], [0.0, 0.0])
    assert loss == 0.5
    assert dq.tolist() == [1.0, 0.0]


def test_mse_matches_compensated_sum(rng):
    q, r = rng.normal(size=257), rng.normal(size=257)
    loss, dq = mse_loss(q, r)
    assert loss == pytest.approx(kahan_mse(q.tolist(), r.tolist()), rel=1e-13)
    np.testing.assert_allclose(dq, 2 / 257 * (q - r))


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse_loss([1.0], [1.0, 2.0])


def test_adam_zero_gradient_is_identity(rng):
    params = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
    before = {k: v.copy() for k, v in params.items()}
    state = AdamState.zeros_like(params)
    adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state, 1e-3)
    for k in params:
        assert np.array_equal(params[k], before[k])
    assert state.t == 1


@pytest.mark.parametrize("g", [1e-4, 0.3, -2.0, 1e3])
def test_adam_first_step_magnitude(g):
    params = {"x": np.array([1.0])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"x": np.array([g])}, state, lr=0.01)
    expected = 0.01 * abs(g) / (abs(g) + 1e-8)
    assert abs(1.0 - params["x"][0]) == pytest.approx(expected, rel=1e-9)


def test_adam_deterministic(rng):
    grads = [{"w": rng.normal(size=4)} for _ in range(5)]

    def run():
        p = {"w": np.arange(4.0)}
        s = AdamState.zeros_like(p)
        for g in grads:
            adam_step(p, g, s, 0.01)
        return p["w"]

    assert run().tobytes() == run().tobytes()


def test_adam_shape_mismatch():
    p = {"w": np.zeros(3)}
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(4)}, AdamState.zeros_like(p), 0.1)


# -- gradient checker -------------------------------------------------------

def test_grad_check_zero_dq():
    net = random_net(8)
    assert grad_check(net, np.ones((2, 4)), np.zeros((2, 2))) == 0.0


def test_grad_check_small_net(rng):
    net = random_net(9, n_in=4, hidden=3, n_act=2)
    assert grad_check(net, rng.normal(size=(3, 4)), rng.normal(size=(3, 2))) < 1e-4


def test_grad_check_detects_corruption(rng):
    net = random_net(10, n_in=4, hidden=3, n_act=2)
    seq, dq = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    _, cache = qnet_forward(net, seq)
    grads = qnet_backward(cache, dq)
    g = grads["lstm.w_hh"].reshape(-1)
    g[np.argmax(np.abs(g))] *= 2
    assert grad_check(net, seq, dq, grads=grads) > 1e-2


def test_sigmoid_extremes():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]
