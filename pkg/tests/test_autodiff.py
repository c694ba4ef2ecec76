import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dram import autodiff as ad
from dram.autodiff import DimensionError, Parameter, ParameterError, Tensor

finite = st.floats(-10, 10, allow_nan=False)


# linear -------------------------------------------------------------------

def test_linear_identity():
    out = ad.linear(Tensor([3.0, -1.0]), Parameter(np.eye(2)), Parameter(np.zeros(2)))
    np.testing.assert_array_equal(out.data, [3.0, -1.0])


def test_linear_hand_product():
    out = ad.linear(Tensor([1.0, 1.0]), Parameter([[1.0, 2.0], [3.0, 4.0]]), Parameter([1.0, 1.0]))
    np.testing.assert_array_equal(out.data, [4.0, 8.0])


def test_linear_backward_matches_outer_product():
    x = Parameter([0.5, -2.0, 1.0])
    W = Parameter(np.arange(6.0).reshape(2, 3))
    b = Parameter([0.0, 0.0])
    g = np.array([1.5, -0.5])
    ad.linear(x, W, b).backward(g)
    np.testing.assert_allclose(W.grad, np.outer(g, x.data))
    np.testing.assert_allclose(b.grad, g)
    np.testing.assert_allclose(x.grad, W.data.T @ g)


def test_linear_bias_gradient_of_sum_is_ones():
    b = Parameter(np.zeros(4))
    ad.tsum(ad.linear(Tensor(np.ones(3)), Parameter(np.ones((4, 3))), b)).backward()
    np.testing.assert_array_equal(b.grad, np.ones(4))


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2, 2\)"):
        ad.linear(Tensor(np.ones(3)), Parameter(np.eye(2)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3,), elements=finite), arrays(np.float64, (2, 3), elements=finite),
       st.floats(-5, 5, allow_nan=False))
def test_linear_is_homogeneous_without_bias(x, W, alpha):
    lhs = ad.linear(Tensor(alpha * x), Parameter(W)).data
    rhs = alpha * ad.linear(Tensor(x), Parameter(W)).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


# causal convolution -------------------------------------------------------

def _conv_1ch(x, taps, d):
    kernel = Parameter(np.array(taps, dtype=float).reshape(1, 1, -1))
    return ad.causal_dilated_conv1d(Tensor(np.array([x], dtype=float)), kernel, d).data[0]


@pytest.mark.parametrize("x, taps, d, expected", [
    ([1, 2, 3], [1, 0], 1, [1, 2, 3]),
    ([1, 2, 3], [0, 1], 1, [0, 1, 2]),
    ([1, 2, 3, 4], [0, 1], 2, [0, 0, 1, 2]),
])
def test_conv_hand_examples(x, taps, d, expected):
    np.testing.assert_array_equal(_conv_1ch(x, taps, d), expected)


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 11))
    kern = rng.normal(size=(2, 3, 3))
    d = 2
    out = ad.causal_dilated_conv1d(Tensor(x), Parameter(kern), d).data
    ref = np.zeros((2, 11))
    for c in range(2):
        for t in range(11):
            for j in range(3):
                if t - j * d >= 0:
                    ref[c, t] += kern[c, :, j] @ x[:, t - j * d]
    np.testing.assert_allclose(out, ref, atol=1e-13)


@pytest.mark.parametrize("d", [0, -1])
def test_conv_rejects_bad_dilation(d):
    with pytest.raises(ParameterError):
        ad.causal_dilated_conv1d(Tensor(np.ones((1, 3))), Parameter(np.ones((1, 1, 2))), d)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_conv_future_columns_have_no_influence(t, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 10))
    kern = Parameter(rng.normal(size=(3, 2, 3)))
    base = ad.causal_dilated_conv1d(Tensor(x), kern, d).data
    x2 = x.copy()
    x2[:, t + 1] += rng.normal(size=2) * 100
    moved = ad.causal_dilated_conv1d(Tensor(x2), kern, d).data
    assert np.array_equal(base[:, : t + 1], moved[:, : t + 1])


# lstm cell ---------------------------------------------------------------

def _zero_lstm(d_in, d_h):
    return Parameter(np.zeros((4 * d_h, d_in))), Parameter(np.zeros((4 * d_h, d_h))), Parameter(np.zeros(4 * d_h))


def test_lstm_zero_fixed_point():
    h, c = ad.lstm_cell_step(np.zeros(2), np.zeros(3), np.zeros(3), *_zero_lstm(2, 3))
    np.testing.assert_array_equal(h.data, 0)
    np.testing.assert_array_equal(c.data, 0)


def test_lstm_saturated_forget_gate_keeps_cell():
    W_ih, W_hh, b = _zero_lstm(2, 3)
    b.data[3:6] = 100.0
    c_prev = np.array([0.3, -1.2, 2.0])
    _, c = ad.lstm_cell_step(np.zeros(2), np.zeros(3), c_prev, W_ih, W_hh, b)
    np.testing.assert_allclose(c.data, c_prev, rtol=1e-12)


def test_lstm_scalar_hand_evaluation():
    # one input, one hidden unit; gate rows (input, forget, cell, output)
    w_x = np.array([0.5, -0.3, 0.8, 0.1])
    w_h = np.array([0.2, 0.4, -0.6, 0.7])
    bias = np.array([0.1, 1.0, 0.0, -0.2])
    x, h0, c0 = 0.9, -0.4, 0.25
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    z = w_x * x + w_h * h0 + bias
    c_ref = sig(z[1]) * c0 + sig(z[0]) * np.tanh(z[2])
    h_ref = sig(z[3]) * np.tanh(c_ref)
    h, c = ad.lstm_cell_step([x], [h0], [c0], Parameter(w_x[:, None]), Parameter(w_h[:, None]), Parameter(bias))
    assert abs(h.data[0] - h_ref) < 1e-12
    assert abs(c.data[0] - c_ref) < 1e-12


def test_lstm_shape_mismatch():
    W_ih, W_hh, b = _zero_lstm(2, 3)
    with pytest.raises(DimensionError):
        ad.lstm_cell_step(np.zeros(2), np.zeros(4), np.zeros(4), W_ih, W_hh, b)


# elementwise ---------------------------------------------------------------

def test_tanh_values():
    assert ad.tanh(Tensor(0.0)).data == 0.0
    assert ad.tanh(Tensor(1.0)).data == 0.7615941559557649


def test_abs_value_and_sign_rule():
    x = Parameter(-2.5)
    y = ad.absolute(x)
    assert y.data == 2.5
    y.backward(1.0)
    assert x.grad == -1.0


def test_abs_derivative_at_zero_is_zero():
    x = Parameter([0.0])
    ad.absolute(x).backward()
    assert x.grad[0] == 0.0


def test_unknown_elementwise_kind():
    with pytest.raises(ParameterError):
        ad.elementwise("softplus", Tensor(1.0))


# mse ---------------------------------------------------------------------------

def test_mse_examples():
    assert ad.mse_loss(Tensor([[1.0, 2.0]]), Tensor([[1.0, 2.0]])).data == 0.0
    assert ad.mse_loss(Tensor([[1.0, 2.0]]), Tensor([[0.0, 0.0]])).data == 5.0
    assert ad.mse_loss(Tensor([[1.0, 2.0], [2.0, 1.0]]), Tensor(np.zeros((2, 2)))).data == 5.0


def test_mse_backward():
    pred = Parameter([[1.0, 2.0], [0.0, -1.0]])
    ad.mse_loss(pred, np.zeros((2, 2))).backward()
    np.testing.assert_allclose(pred.grad, 2 * pred.data / 2)


def test_mse_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.mse_loss(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))


# parameters, determinism ------------------------------------------------------

def test_zero_grad():
    p = Parameter(np.ones(3))
    ad.tsum(p * p).backward()
    assert p.grad.any()
    p.zero_grad()
    assert p.grad.shape == p.data.shape and not p.grad.any()


def test_no_grad_builds_no_graph():
    p = Parameter(np.ones(2))
    with ad.no_grad():
        y = p * p
    assert not y.requires_grad
    assert ad.is_grad_enabled()


def test_forward_is_deterministic():
    rng = np.random.default_rng(0)
    x, k = rng.normal(size=(3, 20)), Parameter(rng.normal(size=(4, 3, 2)))
    a = ad.tanh(ad.causal_dilated_conv1d(Tensor(x), k, 2)).data
    b = ad.tanh(ad.causal_dilated_conv1d(Tensor(x), k, 2)).data
    assert a.tobytes() == b.tobytes()


# grad_check harness ---------------------------------------------------------------

def test_grad_check_linear():
    rng = np.random.default_rng(1)
    x, W, b = Parameter(rng.normal(size=4)), Parameter(rng.normal(size=(3, 4))), Parameter(rng.normal(size=3))
    assert ad.grad_check(lambda: ad.linear(x, W, b), [x, W, b], h=1e-5) < 1e-6


def test_grad_check_tanh_chain():
    rng = np.random.default_rng(2)
    x = Parameter(rng.normal(size=5))
    assert ad.grad_check(lambda: ad.tanh(ad.tanh(x) * 2.0), [x], h=1e-5) < 1e-6


def test_grad_check_detects_sign_flip():
    x = Parameter(np.random.default_rng(4).normal(size=5))

    def flipped():
        y = ad.tanh(x)
        orig = y._backward
        y._backward = lambda g: orig(-g)
        return y

    assert ad.grad_check(flipped, [x], h=1e-5) > 0.1


@pytest.mark.parametrize("h", [0.0, 2e-3])
def test_grad_check_rejects_step(h):
    with pytest.raises(ParameterError):
        ad.grad_check(lambda: Tensor(1.0), [], h=h)


def test_kink_tracking_records_margin():
    with ad.track_kinks() as margins:
        ad.relu(Tensor([-0.5, 0.25, 2.0]))
    assert margins == [0.25]
