import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import NumericError, ShapeError, TapeError
from src.tensor_core import (
    ConvParams,
    Tape,
    Tensor,
    backward,
    conv2d,
    debug_checks,
    default_dtype,
    dense,
    finite_diff_grad,
    float64_mode,
    global_avg_pool,
    layer_norm,
    maxpool2d,
    relu,
    relu6,
    sigmoid,
    softmax,
)
from src.tensor_core import ops


def conv_oracle(x, kernel, bias, stride, before, after):
    """Direct nested-loop cross-correlation of one H x W x Cin volume."""
    kh, kw, _, cout = kernel.shape
    xp = np.pad(x, ((before[0], after[0]), (before[1], after[1]), (0, 0)))
    ho = (xp.shape[0] - kh) // stride + 1
    wo = (xp.shape[1] - kw) // stride + 1
    out = np.zeros((ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            for o in range(cout):
                window = xp[i * stride : i * stride + kh, j * stride : j * stride + kw, :]
                out[i, j, o] = np.sum(window * kernel[..., o]) + bias[o]
    return out


def conv_params(rng, kh, cin, cout, **geometry):
    return ConvParams(Tensor(rng.normal(size=(kh, kh, cin, cout))), Tensor(rng.normal(size=cout)), **geometry)


# =============================================================================
# Tape
# =============================================================================

class TestTape:

    def test_ops_without_tape_are_untracked(self):
        out = ops.add(Tensor([1.0, 2.0]), 1.0)
        assert out.node_id is None
        assert_array_equal(out.data, [2.0, 3.0])

    def test_gradient_of_sum_is_ones(self, grad_of):
        grad = grad_of(lambda x: ops.sum(x), Tensor(np.arange(6.0).reshape(2, 3)))
        assert_array_equal(grad, np.ones((2, 3)))

    def test_gradient_of_sum_of_squares_is_twice_x(self, grad_of):
        x = np.array([1.5, -2.0, 0.25])
        assert_allclose(grad_of(lambda t: ops.sum(ops.mul(t, t)), Tensor(x)), 2 * x)

    def test_consumed_tape_rejects_second_backward(self):
        with Tape() as tape:
            x = tape.watch(Tensor([1.0, 2.0]))
            loss = ops.sum(x)
        backward(tape, loss)
        with pytest.raises(TapeError):
            backward(tape, loss)

    def test_retained_tape_allows_several_roots(self):
        with Tape() as tape:
            x = tape.watch(Tensor([1.0, 2.0]))
            first = ops.sum(ops.mul(x, 3.0))
            second = ops.sum(ops.mul(x, x))
        backward(tape, first, retain=True)
        assert_allclose(tape.gradient(x).data, [3.0, 3.0])
        backward(tape, second)
        assert_allclose(tape.gradient(x).data, [2.0, 4.0])

    def test_non_scalar_root_is_rejected(self):
        with Tape() as tape:
            x = tape.watch(Tensor([1.0, 2.0]))
            y = ops.mul(x, 2.0)
        with pytest.raises(TapeError):
            backward(tape, y)

    def test_unreached_tensor_has_zero_gradient(self):
        with Tape() as tape:
            x = tape.watch(Tensor([1.0, 2.0]))
            unused = tape.watch(Tensor([5.0]))
            loss = ops.sum(x)
        backward(tape, loss)
        assert_array_equal(tape.gradient(unused).data, [0.0])

    def test_intermediate_gradients_are_kept(self):
        with Tape() as tape:
            x = tape.watch(Tensor([1.0, -1.0]))
            hidden = ops.mul(x, 2.0)
            loss = ops.sum(ops.mul(hidden, hidden))
        backward(tape, loss)
        assert_allclose(tape.gradient(hidden).data, [4.0, -4.0])

    def test_float64_mode_switches_default_dtype(self):
        assert default_dtype() == np.float32
        with float64_mode():
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_debug_checks_reject_nan_from_finite_inputs(self):
        with debug_checks():
            with pytest.raises(NumericError):
                ops.log(Tensor([-1.0]))


# =============================================================================
# Finite differences
# =============================================================================

class TestFiniteDifferences:

    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        assert_allclose(finite_diff_grad(ops.sum, x).data, np.ones((3, 2)), atol=1e-8)

    def test_square_at_three(self):
        grad = finite_diff_grad(lambda t: ops.sum(ops.mul(t, t)), Tensor(np.array([3.0])), eps=1e-3)
        assert abs(grad.data[0] - 6.0) < 1e-5


# =============================================================================
# Neural-network operations
# =============================================================================

class TestConv2d:

    def test_one_by_one_kernel_scales(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[..., None])
        params = ConvParams(Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.zeros(1)))
        assert_allclose(conv2d(x, params).data[..., 0], [[2.0, 4.0], [6.0, 8.0]])

    def test_zero_kernel_gives_bias(self, rng):
        x = Tensor(rng.normal(size=(5, 4, 3)))
        params = ConvParams(Tensor(np.zeros((3, 3, 3, 2))), Tensor(np.array([0.5, -1.0])))
        out = conv2d(x, params).data
        assert out.shape == (5, 4, 2)
        assert_allclose(out[..., 0], 0.5)
        assert_allclose(out[..., 1], -1.0)

    def test_same_padding_stride_two_matches_oracle(self, rng):
        x = rng.normal(size=(4, 4, 1))
        params = conv_params(rng, 3, 1, 1, stride=2)
        out = conv2d(Tensor(x), params).data
        assert out.shape == (2, 2, 1)
        expected = conv_oracle(x, params.kernel.data, params.bias.data, 2, (0, 0), (1, 1))
        assert_allclose(out, expected, atol=1e-10)

    def test_valid_dilated_matches_oracle(self, rng):
        x = rng.normal(size=(7, 7, 2))
        params = conv_params(rng, 3, 2, 3, dilation=2, padding="valid")
        kernel = np.zeros((5, 5, 2, 3))
        kernel[::2, ::2] = params.kernel.data
        expected = conv_oracle(x, kernel, params.bias.data, 1, (0, 0), (0, 0))
        assert_allclose(conv2d(Tensor(x), params).data, expected, atol=1e-10)

    @pytest.mark.parametrize("kernel, dilation", [(1, 1), (3, 1), (5, 1), (3, 2)])
    def test_same_padding_at_stride_one_keeps_height_and_width(self, rng, kernel, dilation):
        x = Tensor(rng.normal(size=(2, 7, 5, 3)))
        out = conv2d(x, conv_params(rng, kernel, 3, 4, dilation=dilation, padding="same"))
        assert out.shape == (2, 7, 5, 4)

    def test_shared_kernel_over_set_axis(self, rng):
        x = rng.normal(size=(3, 5, 5, 2))
        params = conv_params(rng, 3, 2, 2)
        batched = conv2d(Tensor(x), params).data
        for i in range(3):
            assert_allclose(batched[i], conv2d(Tensor(x[i]), params).data)

    def test_channel_mismatch_names_shapes(self, rng):
        params = conv_params(rng, 3, 2, 2)
        with pytest.raises(ShapeError, match=r"\(4, 4, 3\)"):
            conv2d(Tensor(np.zeros((4, 4, 3))), params)


class TestPooling:

    def test_max_of_window(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[..., None])
        assert_allclose(maxpool2d(x, 2).data, [[[4.0]]])

    def test_constant_volume(self):
        out = maxpool2d(Tensor(np.full((4, 4, 2), 7.0)), 2).data
        assert out.shape == (2, 2, 2)
        assert_allclose(out, 7.0)

    def test_matches_window_oracle(self, rng):
        x = rng.normal(size=(6, 6, 2))
        out = maxpool2d(Tensor(x), 2).data
        for i in range(3):
            for j in range(3):
                assert_allclose(out[i, j], x[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max(axis=(0, 1)))

    def test_trailing_cells_are_dropped(self, rng):
        assert maxpool2d(Tensor(rng.normal(size=(5, 7, 1))), 2).shape == (2, 3, 1)

    def test_tie_gradient_goes_to_first_maximum(self, grad_of):
        grad = grad_of(lambda t: ops.sum(maxpool2d(t, 2)), Tensor(np.ones((2, 2, 1))))
        assert_array_equal(grad[..., 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_global_average(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 6.0]])[..., None])
        assert_allclose(global_avg_pool(x).data, [3.0])

    def test_global_average_of_single_position(self):
        assert_allclose(global_avg_pool(Tensor(np.array([[[1.0, 2.0, 3.0]]]))).data, [1.0, 2.0, 3.0])

    def test_global_average_matches_summation(self, rng):
        x = rng.normal(size=(5, 7, 3))
        expected = [sum(x[i, j, c] for i in range(5) for j in range(7)) / 35 for c in range(3)]
        assert_allclose(global_avg_pool(Tensor(x)).data, expected, atol=1e-6)


class TestDenseAndActivations:

    def test_identity_weight(self, rng):
        x = rng.normal(size=4)
        assert_allclose(dense(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x)

    def test_zero_weight_gives_bias(self, rng):
        out = dense(Tensor(rng.normal(size=4)), Tensor(np.zeros((4, 3))), Tensor([1.0, 2.0, 3.0]))
        assert_allclose(out.data, [1.0, 2.0, 3.0])

    def test_matches_loop_oracle(self, rng):
        x, w, b = rng.normal(size=4), rng.normal(size=(4, 3)), rng.normal(size=3)
        expected = [sum(x[i] * w[i, k] for i in range(4)) + b[k] for k in range(3)]
        assert_allclose(dense(Tensor(x), Tensor(w), Tensor(b)).data, expected)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dense(Tensor(np.zeros(3)), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_activation_values(self):
        assert_allclose(relu6(Tensor([-1.0, 3.0, 8.0])).data, [0.0, 3.0, 6.0])
        assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
        assert_allclose(sigmoid(Tensor([0.0])).data, [0.5])
        assert_allclose(relu(Tensor([-2.0, 2.0])).data, [0.0, 2.0])

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = sigmoid(Tensor(np.array([-800.0, 800.0]))).data
        assert np.all(np.isfinite(out))
        assert_allclose(out, [0.0, 1.0])

    def test_softmax_rows_sum_to_one(self, rng):
        logits = rng.normal(scale=20.0, size=(3, 5, 7))
        probs = softmax(Tensor(logits)).data
        assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(probs >= 0.0)

    def test_relu_gradient_at_the_kink(self, grad_of):
        grad = grad_of(lambda t: ops.sum(relu(t)), Tensor(np.array([-1.0, 0.0, 1e-9, 2.0])))
        assert_array_equal(grad, [0.0, 0.0, 1.0, 1.0])

    def test_relu6_gradient_at_both_clip_points(self, grad_of):
        x = Tensor(np.array([-1.0, 0.0, 3.0, 6.0, 6.0 + 1e-9, 7.0]))
        grad = grad_of(lambda t: ops.sum(relu6(t)), x)
        assert_array_equal(grad, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0])


class TestLayerNorm:

    def test_constant_input_normalizes_to_zero(self):
        out = layer_norm(Tensor(np.full(5, 3.0)), Tensor(np.ones(5)), Tensor(np.zeros(5)))
        assert_allclose(out.data, 0.0)

    def test_zero_gain_gives_shift(self, rng):
        out = layer_norm(Tensor(rng.normal(size=4)), Tensor(np.zeros(4)), Tensor(np.full(4, 0.7)))
        assert_allclose(out.data, 0.7)

    def test_matches_two_pass_oracle(self, rng):
        x, gain, shift = rng.normal(size=8), rng.normal(size=8), rng.normal(size=8)
        mu = sum(x) / 8
        var = sum((v - mu) ** 2 for v in x) / 8
        expected = (x - mu) / math.sqrt(var + 1e-5) * gain + shift
        assert_allclose(layer_norm(Tensor(x), Tensor(gain), Tensor(shift)).data, expected, atol=1e-10)


# =============================================================================
# Gradient checks (64-bit)
# =============================================================================

def _weights(rng, shape):
    return Tensor(rng.normal(size=shape))


GRADIENT_CASES = {
    "mul": lambda rng: ((3, 4), lambda x: ops.sum(ops.mul(x, x))),
    "div": lambda rng: ((3,), lambda x: ops.sum(ops.div(Tensor([1.0, 2.0, 3.0]), ops.add(ops.mul(x, x), 1.0)))),
    "matmul": lambda rng: ((2, 3, 4), (lambda w: lambda x: ops.sum(ops.mul(ops.matmul(x, w), ops.matmul(x, w))))(_weights(rng, (4, 2)))),
    "mean": lambda rng: ((3, 5), lambda x: ops.sum(ops.mul(ops.mean(x, axis=-1), Tensor([1.0, -2.0, 0.5])))),
    "transpose": lambda rng: ((2, 3, 4), (lambda w: lambda x: ops.sum(ops.mul(ops.transpose(x, (2, 0, 1)), w)))(_weights(rng, (4, 2, 3)))),
    "exp_log": lambda rng: ((4,), lambda x: ops.sum(ops.log(ops.add(ops.exp(x), 1.0)))),
    "softmax": lambda rng: ((2, 5), (lambda w: lambda x: ops.sum(ops.mul(softmax(x), w)))(_weights(rng, (2, 5)))),
    "sigmoid": lambda rng: ((6,), (lambda w: lambda x: ops.sum(ops.mul(sigmoid(x), w)))(_weights(rng, (6,)))),
    "layer_norm": lambda rng: ((3, 6), (lambda g, s, w: lambda x: ops.sum(ops.mul(layer_norm(x, g, s), w)))(_weights(rng, 6), _weights(rng, 6), _weights(rng, (3, 6)))),
    "conv2d": lambda rng: ((2, 5, 5, 2), (lambda p: lambda x: ops.sum(ops.mul(conv2d(x, p), conv2d(x, p))))(conv_params(rng, 3, 2, 3, stride=2))),
    "maxpool2d": lambda rng: ((6, 6, 2), (lambda w: lambda x: ops.sum(ops.mul(maxpool2d(x, 2), w)))(_weights(rng, (3, 3, 2)))),
    "global_avg_pool": lambda rng: ((3, 4, 4, 2), (lambda w: lambda x: ops.sum(ops.mul(global_avg_pool(x), w)))(_weights(rng, (3, 2)))),
    "dense": lambda rng: ((4, 3), (lambda w, b: lambda x: ops.sum(ops.mul(dense(x, w, b), dense(x, w, b))))(_weights(rng, (3, 2)), _weights(rng, 2))),
}


@pytest.mark.parametrize("case", sorted(GRADIENT_CASES))
def test_backward_matches_finite_differences(case, rng, grad_of, assert_grad_close):
    with float64_mode():
        shape, f = GRADIENT_CASES[case](rng)
        x = Tensor(rng.normal(size=shape))
        assert_grad_close(grad_of(f, x), finite_diff_grad(f, x))


def test_conv_kernel_gradient_matches_finite_differences(rng, assert_grad_close):
    x = Tensor(rng.normal(size=(2, 5, 5, 2)))
    params = conv_params(rng, 3, 2, 2)

    def loss(kernel):
        out = conv2d(x, ConvParams(kernel, params.bias))
        return ops.sum(ops.mul(out, out))

    with Tape() as tape:
        kernel = tape.watch(params.kernel)
        root = loss(kernel)
    backward(tape, root)
    assert_grad_close(tape.gradient(kernel), finite_diff_grad(loss, params.kernel))
