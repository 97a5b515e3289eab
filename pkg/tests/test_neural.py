import numpy as np
import pytest
from hypothesis import given, strategies as st

from iwsn_trust.errors import NumericError, ShapeError, StateError
from iwsn_trust.neural import (
    AdamState,
    BatchNorm,
    DenseLayer,
    DenseNetwork,
    adam_step,
    gradient_check,
    loss_least_squares,
    loss_mean_abs,
)


def single(weight, bias, activation="linear"):
    return DenseNetwork([DenseLayer(np.asarray(weight, float), np.asarray(bias, float), activation)])


# forward


def test_identity_linear_layer():
    net = single(np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(net.forward(np.array([[1.0, 2.0]])), [[1.0, 2.0]])


def test_tanh_zero_weights_gives_zero(rng):
    net = single(np.zeros((3, 2)), np.zeros(2), "tanh")
    np.testing.assert_array_equal(net.forward(rng.normal(size=(4, 3))), np.zeros((4, 2)))


def test_sigmoid_zero_weights_gives_half(rng):
    net = single(np.zeros((3, 2)), np.zeros(2), "sigmoid")
    np.testing.assert_array_equal(net.forward(rng.normal(size=(4, 3))), np.full((4, 2), 0.5))


def test_sigmoid_extreme_inputs_stay_finite():
    net = single(np.array([[1.0]]), np.zeros(1), "sigmoid")
    out = net.forward(np.array([[-800.0], [800.0]]))
    np.testing.assert_allclose(out, [[0.0], [1.0]])


def test_column_mismatch_is_shape_error(rng):
    net = DenseNetwork.build([3, 4, 1], rng)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 5)))


def test_batch_norm_needs_two_rows_in_train_mode(rng):
    net = DenseNetwork.build([3, 4, 1], rng, batch_norm=True)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 3)), train=True)
    assert net.forward(np.zeros((1, 3)), train=False).shape == (1, 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_output_is_numeric_error():
    net = single(np.array([[1e308]]), np.zeros(1))
    with pytest.raises(NumericError):
        net.forward(np.array([[1e308]]))


def test_layer_widths_must_chain():
    a = DenseLayer(np.zeros((2, 3)), np.zeros(3))
    b = DenseLayer(np.zeros((4, 1)), np.zeros(1))
    with pytest.raises(ShapeError):
        DenseNetwork([a, b])


def test_unknown_activation_rejected():
    with pytest.raises(ValueError):
        DenseLayer(np.zeros((2, 2)), np.zeros(2), "relu6")


def test_infer_mode_uses_running_statistics(rng):
    net = DenseNetwork.build([2, 3, 1], rng, batch_norm=True)
    bn = net.layers[0].bn
    bn.running_mean[:] = 5.0
    bn.running_var[:] = 4.0
    x = rng.normal(size=(6, 2))
    h = x @ net.layers[0].weight
    expect_hidden = (h - 5.0) / 2.0  # variance is floored, not offset
    expect_hidden = np.where(expect_hidden > 0, expect_hidden, 0.2 * expect_hidden)
    expect = expect_hidden @ net.layers[1].weight
    np.testing.assert_allclose(net.forward(x, train=False), expect, rtol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
def test_batch_norm_output_matches_scale_and_shift(seed, gamma, beta):
    rng = np.random.default_rng(seed)
    layer = DenseLayer(rng.normal(size=(3, 4)), np.zeros(4), "linear", BatchNorm.fresh(4))
    layer.bn.gamma[:] = gamma
    layer.bn.beta[:] = beta
    out = DenseNetwork([layer]).forward(rng.normal(size=(16, 3)))
    np.testing.assert_allclose(out.mean(axis=0), beta, atol=1e-6)
    np.testing.assert_allclose(out.std(axis=0), abs(gamma), atol=1e-6)


def test_running_statistics_move_with_momentum(rng):
    net = DenseNetwork.build([2, 3, 1], rng, batch_norm=True)
    x = rng.normal(size=(8, 2))
    h = x @ net.layers[0].weight
    net.forward(x, train=True)
    bn = net.layers[0].bn
    np.testing.assert_allclose(bn.running_mean, 0.1 * h.mean(axis=0))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * h.var(axis=0))


# backward


def test_backward_before_forward_is_state_error(rng):
    net = DenseNetwork.build([2, 2], rng)
    with pytest.raises(StateError):
        net.backward(np.zeros((1, 2)))


def test_zero_upstream_gives_zero_gradients(rng):
    net = DenseNetwork.build([3, 5, 2], rng, final="tanh", batch_norm=True)
    net.forward(rng.normal(size=(4, 3)))
    grads, g_in = net.backward(np.zeros((4, 2)))
    for g, p in zip(grads, net.params()):
        assert g.shape == p.shape
        assert not g.any()
    assert not g_in.any()


def test_linear_weight_gradient_equals_input():
    net = single(np.array([[0.3], [-0.7]]), np.zeros(1))
    x = np.array([[2.0, 5.0]])
    net.forward(x)
    (g_w, g_b), _ = net.backward(np.ones((1, 1)))
    np.testing.assert_array_equal(g_w, x.T)
    np.testing.assert_array_equal(g_b, [1.0])


def test_random_three_layer_net_matches_finite_differences(rng):
    net = DenseNetwork.build([4, 6, 5, 3], rng, final="sigmoid", batch_norm=True, init_std=0.5)
    assert gradient_check(net, rng.normal(size=(5, 4)), target=rng.uniform(size=(5, 3))) < 1e-4


@pytest.mark.parametrize("final", ["linear", "tanh", "sigmoid", "leaky"])
@pytest.mark.parametrize("batch_norm", [False, True])
def test_every_layer_type_passes_gradient_check(final, batch_norm):
    rng = np.random.default_rng(hash((final, batch_norm)) % 2**32)
    net = DenseNetwork.build([3, 5, 4, 2], rng, final=final, batch_norm=batch_norm, init_std=0.5)
    batch = rng.normal(size=(6, 3))
    assert gradient_check(net, batch, target=rng.normal(size=(6, 2))) < 1e-4


def test_input_gradient_matches_finite_differences(rng):
    net = DenseNetwork.build([3, 4, 2], rng, final="tanh", init_std=0.5)
    x = rng.normal(size=(2, 3))
    target = rng.normal(size=(2, 2))
    _, g_in = net.backward(loss_least_squares(net.forward(x), target).grad)
    num = np.zeros_like(x)
    eps = 1e-6
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        up = loss_least_squares(net.forward(xp), target).value
        down = loss_least_squares(net.forward(xm), target).value
        num[idx] = (up - down) / (2 * eps)
    np.testing.assert_allclose(g_in, num, rtol=1e-5, atol=1e-9)


# gradient_check itself


def test_gradient_check_two_layer_tanh(rng):
    net = DenseNetwork.build([3, 4, 2], rng, hidden="tanh", final="tanh", init_std=0.5)
    assert gradient_check(net, rng.normal(size=(4, 3)), epsilon=1e-5) < 1e-4


def test_gradient_check_zero_network_is_zero():
    net = DenseNetwork([DenseLayer(np.zeros((3, 2)), np.zeros(2), "tanh"), DenseLayer(np.zeros((2, 1)), np.zeros(1))])
    assert gradient_check(net, np.zeros((2, 3))) == 0.0


def test_gradient_check_catches_corrupted_gradients(rng):
    net = DenseNetwork.build([3, 4, 2], rng, hidden="tanh", init_std=0.5)

    def corrupt(grads):
        grads[0] = grads[0] * 1.5 + 0.1
        return grads

    assert gradient_check(net, rng.normal(size=(4, 3)), grad_hook=corrupt) > 1e-2


def test_gradient_check_rejects_nonpositive_epsilon(rng):
    with pytest.raises(ValueError):
        gradient_check(DenseNetwork.build([2, 1], rng), np.zeros((2, 2)), epsilon=0.0)


# adam


def test_adam_zero_gradients_is_no_op(rng):
    params = [rng.normal(size=(3, 2)), rng.normal(size=2)]
    before = [p.copy() for p in params]
    state = AdamState.for_params(params)
    adam_step(params, [np.zeros_like(p) for p in params], state)
    for a, b in zip(params, before):
        np.testing.assert_array_equal(a, b)
    assert state.t == 1


def test_adam_first_step_is_learning_rate():
    p = [np.array([1.0])]
    state = AdamState.for_params(p, lr=2e-4)
    adam_step(p, [np.array([1.0])], state)
    # bias-corrected m/sqrt(v) is exactly 1 on the first step
    np.testing.assert_allclose(1.0 - p[0], 2e-4 / (1 + 1e-8), rtol=1e-12)


def test_adam_matches_hand_formula_over_steps():
    p = [np.array([0.5])]
    state = AdamState.for_params(p, lr=0.01, beta1=0.9, beta2=0.99, eps=1e-8)
    grads = [0.3, -0.2, 0.7]
    m = v = 0.0
    x = 0.5
    for t, g in enumerate(grads, 1):
        adam_step(p, [np.array([g])], state)
        m = 0.9 * m + 0.1 * g
        v = 0.99 * v + 0.01 * g * g
        x -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
    np.testing.assert_allclose(p[0], [x], rtol=1e-12)


def test_adam_is_deterministic(rng):
    base = [rng.normal(size=(2, 2))]
    grads = [rng.normal(size=(2, 2))]
    a, b = [base[0].copy()], [base[0].copy()]
    sa, sb = AdamState.for_params(a), AdamState.for_params(b)
    for _ in range(3):
        adam_step(a, grads, sa)
        adam_step(b, grads, sb)
    np.testing.assert_array_equal(a[0], b[0])


def test_adam_shape_mismatch(rng):
    p = [np.zeros((2, 2))]
    with pytest.raises(ShapeError):
        adam_step(p, [np.zeros(3)], AdamState.for_params(p))


# losses


def test_least_squares_examples():
    assert loss_least_squares([[0.3]], [[0.3]]).value == 0.0
    assert loss_least_squares([1.0], [0.0]).value == 0.5
    ls = loss_least_squares([1.0, 0.0], [0.0, 0.0])
    assert ls.value == 0.25
    np.testing.assert_array_equal(ls.grad, [0.5, 0.0])


def test_mean_abs_examples():
    assert loss_mean_abs([0.5, 0.1], [0.5, 0.1]).value == 0.0
    assert loss_mean_abs([0.2, 0.8], [0.4, 0.4]).value == pytest.approx(0.3)
    np.testing.assert_array_equal(loss_mean_abs([0.2, 0.7], [0.2, 0.7]).grad, [0.0, 0.0])


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_least_squares(np.zeros(2), np.zeros(3))
    with pytest.raises(ShapeError):
        loss_mean_abs(np.zeros((2, 1)), np.zeros(2))


def test_state_round_trip(rng):
    net = DenseNetwork.build([3, 4, 2], rng, batch_norm=True)
    net.forward(rng.normal(size=(5, 3)))
    other = DenseNetwork.build([3, 4, 2], np.random.default_rng(0), batch_norm=True)
    other.load_state(net.state())
    x = rng.normal(size=(3, 3))
    np.testing.assert_array_equal(net.forward(x, train=False), other.forward(x, train=False))
