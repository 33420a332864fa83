import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mcmult.errors import ConfigError, ContractError, DegenerateMaskError, DimensionError
from mcmult.gradcheck import finite_diff_check
from mcmult.tensor import (
    Tape,
    Tensor,
    backward,
    concat,
    conv1d_same,
    cross_entropy,
    dropout,
    l1_loss,
    layer_norm,
    matmul,
    mean,
    relu,
    reshape,
    softmax_rows,
    stack,
    sum_,
    take_rows,
    transpose,
)

rng = np.random.default_rng(1234)


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(matmul(T(np.eye(2)), T(b)).data, b)


def test_matmul_zero_annihilates():
    out = matmul(T(np.zeros((2, 3))), T(rng.standard_normal((3, 4)))).data
    assert out.shape == (2, 4) and not out.any()


def test_matmul_against_triple_loop():
    a, b = np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(matmul(T(a), T(b)).data, [[19, 22], [43, 50]])
    a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 3))
    assert np.allclose(matmul(T(a), T(b)).data, oracles.naive_matmul(a, b), atol=1e-13)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
        matmul(T(np.ones((2, 3))), T(np.ones((4, 2))))


def test_batched_matmul_gradients():
    a = T(rng.standard_normal((2, 3, 4)))
    b = T(rng.standard_normal((4, 5)))
    assert finite_diff_check(lambda x: sum_(matmul(x, b) * matmul(x, b)), a) < 1e-7
    assert finite_diff_check(lambda w: sum_(relu(matmul(a, w))), b) < 1e-6


# -- softmax ------------------------------------------------------------------


@pytest.mark.parametrize("c", [-4.0, 0.0, 2.5, 700.0])
def test_softmax_constant_row_uniform(c):
    assert np.allclose(softmax_rows(T([[c, c, c]])).data, 1 / 3)


def test_softmax_single_column():
    assert np.array_equal(softmax_rows(T(rng.standard_normal((4, 1)))).data, np.ones((4, 1)))


def test_softmax_analytic_pair():
    assert np.allclose(softmax_rows(T([[0.0, np.log(3.0)]])).data, [[0.25, 0.75]], atol=1e-15)


def test_softmax_mask_zeroes_and_renormalizes():
    x = rng.standard_normal((3, 5))
    mask = np.array([True, True, False, True, False])
    out = softmax_rows(T(x), mask).data
    assert not out[:, ~mask].any()
    assert np.allclose(out.sum(axis=-1), 1.0)
    assert np.allclose(out, oracles.softmax(x, np.broadcast_to(mask, x.shape)))


def test_softmax_fully_masked_row_raises():
    with pytest.raises(DegenerateMaskError):
        softmax_rows(T(np.zeros((2, 3))), np.array([[True, False, True], [False, False, False]]))


def test_softmax_gradient():
    x = T(rng.standard_normal((3, 4)))
    w = rng.standard_normal((3, 4))
    mask = np.array([True, False, True, True])
    assert finite_diff_check(lambda z: sum_(softmax_rows(z, mask) * T(w)), x) < 1e-7


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 6), elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    out = softmax_rows(T(x)).data
    assert np.all(out >= 0)
    assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-12)


# -- layer norm -----------------------------------------------------------------


def test_layer_norm_constant_row_is_zero():
    out = layer_norm(T(np.full((2, 4), 3.7)), T(np.ones(4)), T(np.zeros(4))).data
    assert np.array_equal(out, np.zeros((2, 4)))


def test_layer_norm_symmetric_pair():
    out = layer_norm(T([[-1.0, 1.0]]), T(np.ones(2)), T(np.zeros(2))).data
    assert np.allclose(out, [[-1.0, 1.0]], atol=1e-5)


def test_layer_norm_matches_oracle():
    x, g, b = rng.standard_normal((3, 4)), rng.standard_normal(4), rng.standard_normal(4)
    out = layer_norm(T(x), T(g), T(b)).data
    assert np.abs(out - oracles.layer_norm(x, g, b)).max() < 1e-12


def test_layer_norm_gradients():
    x, g, b = T(rng.standard_normal((2, 3, 4))), T(rng.standard_normal(4)), T(rng.standard_normal(4))
    w = T(rng.standard_normal((2, 3, 4)))
    assert finite_diff_check(lambda z: sum_(layer_norm(z, g, b) * w), x) < 1e-6
    assert finite_diff_check(lambda z: sum_(layer_norm(x, z, b) * w), g) < 1e-7
    assert finite_diff_check(lambda z: sum_(layer_norm(x, g, z) * w), b) < 1e-7


# -- conv ---------------------------------------------------------------------


def test_conv_identity_kernel():
    x = rng.standard_normal((5, 3))
    out = conv1d_same(T(x), T(np.eye(3)[None]), T(np.zeros(3))).data
    assert np.array_equal(out, x)


def test_conv_zero_kernel_gives_bias():
    bias = np.array([0.5, -1.0])
    out = conv1d_same(T(rng.standard_normal((6, 3))), T(np.zeros((3, 3, 2))), T(bias)).data
    assert np.array_equal(out, np.tile(bias, (6, 1)))


def test_conv_matches_sliding_window():
    x, k, b = rng.standard_normal((4, 3)), rng.standard_normal((3, 3, 2)), rng.standard_normal(2)
    out = conv1d_same(T(x), T(k), T(b)).data
    assert np.allclose(out, oracles.conv_same(x, k, b), rtol=0, atol=1e-14)


def test_conv_batched_rows_independent():
    x = rng.standard_normal((2, 7, 3))
    k, b = T(rng.standard_normal((5, 3, 4))), T(rng.standard_normal(4))
    out = conv1d_same(T(x), k, b).data
    for n in range(2):
        assert np.allclose(out[n], conv1d_same(T(x[n]), k, b).data, atol=1e-14)


def test_conv_even_kernel_rejected():
    with pytest.raises(ConfigError):
        conv1d_same(T(np.ones((4, 2))), T(np.ones((2, 2, 2))), T(np.zeros(2)))


def test_conv_gradients():
    x, k, b = T(rng.standard_normal((2, 6, 3))), T(rng.standard_normal((3, 3, 2))), T(rng.standard_normal(2))
    w = T(rng.standard_normal((2, 6, 2)))
    assert finite_diff_check(lambda z: sum_(conv1d_same(z, k, b) * w), x) < 1e-7
    assert finite_diff_check(lambda z: sum_(conv1d_same(x, z, b) * w), k) < 1e-7
    assert finite_diff_check(lambda z: sum_(conv1d_same(x, k, z) * w), b) < 1e-7


# -- dropout ------------------------------------------------------------------


def test_dropout_eval_and_zero_rate_are_identity():
    x = T(rng.standard_normal((3, 3)))
    assert dropout(x, 0.7, training=False) is x
    assert dropout(x, 0.0, training=True, rng=np.random.default_rng(0)) is x


def test_dropout_monte_carlo():
    x = T(np.full(10_000, 2.0))
    out = dropout(x, 0.5, training=True, rng=np.random.default_rng(7)).data
    kept = (out != 0).mean()
    assert abs(kept - 0.5) < 0.02
    sigma = 2.0 / np.sqrt(out.size)  # std of the mean of {0, 4}-valued draws
    assert abs(out.mean() - 2.0) < 3 * sigma


def test_dropout_rejects_bad_rate_and_missing_rng():
    with pytest.raises(ConfigError):
        dropout(T(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))
    with pytest.raises(ContractError):
        dropout(T(np.ones(3)), 0.5, training=True)


# -- tape -------------------------------------------------------------------------


def test_backward_of_sum_is_ones():
    x = T(rng.standard_normal((3, 2)), grad=True)
    with Tape() as tape:
        y = sum_(x)
    backward(tape, y)
    assert np.array_equal(x.grad, np.ones((3, 2)))


def test_backward_of_sum_of_squares():
    x = T(rng.standard_normal(5), grad=True)
    with Tape() as tape:
        y = sum_(x * x)
    backward(tape, y)
    assert np.allclose(x.grad, 2 * x.data)


def test_backward_accumulates_reused_leaf():
    x = T([1.0, 2.0], grad=True)
    with Tape() as tape:
        y = sum_(x * 3.0 + x * x + x)
    backward(tape, y)
    assert np.allclose(x.grad, 4.0 + 2 * x.data)


def test_backward_rejects_non_scalar_and_foreign_root():
    x = T(np.ones(3), grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        backward(tape, y)
    with Tape() as other:
        z = sum_(x)
    with pytest.raises(ContractError):
        backward(tape, z)
    assert other.ops


def test_unreached_leaf_gets_zero_grad():
    x, w = T(np.ones(2), grad=True), T(np.ones(3), grad=True)
    with Tape() as tape:
        y = sum_(x)
    backward(tape, y, leaves=[x, w])
    assert np.array_equal(w.grad, np.zeros(3))


def test_no_tape_records_nothing():
    x = T(np.ones(3), grad=True)
    y = x * 2.0
    assert y.node is None


def test_shape_ops_gradients():
    x = T(rng.standard_normal((2, 3, 4)))
    w = T(rng.standard_normal((4, 3, 2)))
    assert finite_diff_check(lambda z: sum_(transpose(z, (2, 1, 0)) * w), x) < 1e-8
    assert finite_diff_check(lambda z: sum_(reshape(z, (6, 4)) * reshape(w, (6, 4))), x) < 1e-8
    y = T(rng.standard_normal((2, 3, 1)))
    assert finite_diff_check(lambda z: sum_(concat([z, y], axis=-1) * T(np.ones((2, 3, 5)))), x) < 1e-8
    assert finite_diff_check(lambda z: sum_(stack([z, z * z], axis=0)), x) < 1e-7
    assert finite_diff_check(lambda z: mean(z * z), x) < 1e-7


def test_take_rows_selects_and_routes_gradient():
    x = T(rng.standard_normal((3, 4, 2)))
    idx = np.array([3, 0, 2])
    out = take_rows(x, idx).data
    assert np.array_equal(out, x.data[np.arange(3), idx])
    assert finite_diff_check(lambda z: sum_(take_rows(z, idx) * take_rows(z, idx)), x) < 1e-7


# -- losses -------------------------------------------------------------------


def test_cross_entropy_saturated():
    logits = np.zeros(5)
    logits[2] = 30.0
    assert cross_entropy(T(logits), 2).item() < 1e-12


def test_cross_entropy_uniform_is_log_c():
    assert cross_entropy(T(np.zeros(7)), 4).item() == pytest.approx(np.log(7), abs=1e-15)
    assert cross_entropy(T(np.full(7, 3.3)), 0).item() == pytest.approx(1.945910149055313, abs=1e-12)


def test_cross_entropy_gradient_and_range():
    z = T(rng.standard_normal((4, 3)))
    labels = np.array([0, 2, 1, 2])
    assert finite_diff_check(lambda x: cross_entropy(x, labels), z) < 1e-6
    assert cross_entropy(z, labels).item() >= 0


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ContractError):
        cross_entropy(T(np.zeros(3)), 3)


def test_l1_values_and_subgradient():
    assert l1_loss(T([1.25]), np.array([1.25])).item() == 0.0
    assert l1_loss(T([1.75]), np.array([1.25])).item() == pytest.approx(0.5)
    s = T([0.3, -1.2, 2.0])
    target = np.array([0.0, 0.5, 1.0])
    assert finite_diff_check(lambda x: l1_loss(x, target), s) < 1e-9


# -- probe tensors --------------------------------------------------------------


def test_probe_tensor_matches_per_copy_forward():
    x = rng.standard_normal((3, 5, 4))
    w = rng.standard_normal((3, 4, 4))
    b = rng.standard_normal((3, 4))
    wp, bp = T(w), T(b)
    wp.probe = bp.probe = True
    out = layer_norm(matmul(T(x), wp) + bp, T(np.ones(4)), T(np.zeros(4))).data
    for k in range(3):
        ref = layer_norm(matmul(T(x[k]), T(w[k])) + T(b[k]), T(np.ones(4)), T(np.zeros(4))).data
        assert np.allclose(out[k], ref, atol=1e-13)


def test_probe_tensor_cannot_be_taped():
    w = T(rng.standard_normal((2, 3, 3)), grad=True)
    w.probe = True
    with Tape():
        with pytest.raises(ContractError):
            matmul(T(np.ones((2, 4, 3))), w)
