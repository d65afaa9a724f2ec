import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedexsim import nn
from fedexsim.errors import DomainError, ShapeError, StateError


class TestMatmul:
    def test_identity(self):
        out = nn.matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]])
        assert np.array_equal(out, [[3, 4], [5, 6]])

    def test_dot_product(self):
        assert np.array_equal(nn.matmul([[1, 2]], [[3], [4]]), [[11]])

    def test_dimension_error_names_shapes(self):
        with pytest.raises(ShapeError) as exc:
            nn.matmul(np.zeros((2, 3)), np.zeros((4, 2)))
        assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


class TestConv2d:
    def test_zero_input(self):
        out = nn.conv2d_forward(np.zeros((2, 5, 5)), np.ones((3, 2, 2, 2)), stride=1)
        assert out.shape == (3, 4, 4)
        assert np.all(out == 0)

    def test_ones_summing(self):
        out = nn.conv2d_forward(np.ones((1, 3, 3)), np.ones((1, 1, 2, 2)), stride=1)
        assert out.shape == (1, 2, 2)
        assert np.all(out == 4.0)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            nn.conv2d_forward(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))

    def test_stride_output_shape(self):
        out = nn.conv2d_forward(np.ones((1, 7, 7)), np.ones((2, 1, 3, 3)), stride=2)
        assert out.shape == (2, 3, 3)


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(nn.softmax([0.0, 0.0]), [0.5, 0.5])

    def test_shift_invariance_constant(self):
        assert np.allclose(nn.softmax([3.3] * 4), [0.25] * 4, atol=1e-15)

    def test_no_overflow(self):
        out = nn.softmax([1000.0, 0.0])
        assert np.all(np.isfinite(out))
        # max-subtracted reference: exp(0) / (exp(0) + exp(-1000))
        ref = np.array([1.0, np.exp(-1000.0)])
        ref /= ref.sum()
        assert np.allclose(out, ref)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            nn.softmax([])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-30, 30))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, logits, shift):
        out = nn.softmax(logits)
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.all(out > 0)
        shifted = nn.softmax(np.asarray(logits) + shift)
        assert np.allclose(out, shifted, atol=1e-12)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert nn.cross_entropy([1.0, 0.0], [1.0, 0.0]) <= 1e-8

    def test_uniform_vs_onehot(self):
        assert nn.cross_entropy([0.5, 0.5], [1.0, 0.0]) == pytest.approx(np.log(2), abs=1e-12)

    def test_zero_probability_clamped(self):
        val = nn.cross_entropy([0.0, 1.0], [1.0, 0.0])
        assert np.isfinite(val)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            nn.cross_entropy([0.5, 0.5], [0.5, 0.25, 0.25])

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_gibbs_inequality(self, weights):
        p = np.asarray(weights) / np.sum(weights)
        q = np.roll(p, 1)
        assert nn.cross_entropy(p, p) <= nn.cross_entropy(q, p) + 1e-12


def _finite_difference(layer, x, upstream, key, idx, h=1e-5):
    flat = layer.params[key].ravel()
    orig = flat[idx]

    def f(v):
        flat[idx] = v
        out = layer.forward(x)
        return float((out * upstream).sum())

    plus, minus = f(orig + h), f(orig - h)
    flat[idx] = orig
    layer.forward(x)
    return (plus - minus) / (2 * h)


@pytest.mark.parametrize(
    "layer_factory,in_shape",
    [
        (lambda: nn.Dense(6, 4), (3, 6)),
        (lambda: nn.Conv2D(2, 3, 3), (2, 2, 6, 6)),
        (lambda: nn.Conv2D(2, 2, 3, padding=1), (2, 2, 5, 5)),
    ],
)
def test_parameter_gradients_match_finite_differences(layer_factory, in_shape):
    rng = np.random.default_rng(7)
    layer = layer_factory()
    for k in layer.params:
        layer.params[k][...] = rng.standard_normal(layer.params[k].shape)
    x = rng.standard_normal(in_shape)
    out = layer.forward(x)
    upstream = rng.standard_normal(out.shape)
    layer.backward(upstream)
    for key in layer.params:
        flat_grads = layer.grads[key].ravel()
        for idx in rng.choice(flat_grads.size, size=min(10, flat_grads.size), replace=False):
            fd = _finite_difference(layer, x, upstream, key, idx)
            g = flat_grads[idx]
            assert abs(fd - g) <= 1e-4 * max(1.0, abs(fd), abs(g))


def test_zero_upstream_gives_zero_parameter_gradients():
    rng = np.random.default_rng(1)
    layer = nn.Dense(5, 3)
    layer.params["w"][...] = rng.standard_normal((5, 3))
    out = layer.forward(rng.standard_normal((4, 5)))
    layer.backward(np.zeros_like(out))
    assert np.all(layer.grads["w"] == 0) and np.all(layer.grads["b"] == 0)


def test_dense_scalar_analytic_gradient():
    # y = w*x + b, loss = 0.5*(y - t)^2, dL/dw = (y - t) * x
    layer = nn.Dense(1, 1)
    layer.params["w"][...] = 2.0
    layer.params["b"][...] = 0.5
    x = np.array([[3.0]])
    y = layer.forward(x)
    t = 1.0
    layer.backward(y - t)  # upstream dL/dy
    expected = (2.0 * 3.0 + 0.5 - t) * 3.0
    assert layer.grads["w"][0, 0] == pytest.approx(expected, rel=1e-12)


def test_backward_before_forward_is_state_error():
    with pytest.raises(StateError):
        nn.Dense(2, 2).backward(np.zeros((1, 2)))


def test_maxpool_routes_gradient_to_first_max():
    layer = nn.MaxPool2()
    x = np.zeros((1, 1, 2, 2))  # all-equal window: tie
    layer.forward(x)
    grad = layer.backward(np.ones((1, 1, 1, 1)))
    assert grad[0, 0, 0, 0] == 1.0
    assert grad.sum() == 1.0


def test_residual_zero_weights_is_identity_on_nonnegative_input():
    block = nn.Residual([nn.Conv2D(2, 2, 3, padding=1), nn.ReLU(), nn.Conv2D(2, 2, 3, padding=1)])
    x = np.abs(np.random.default_rng(3).standard_normal((2, 2, 5, 5)))
    assert np.array_equal(block.forward(x), x)


def test_determinism_bitwise():
    rng = np.random.default_rng(11)
    layer = nn.Conv2D(1, 2, 3)
    layer.params["w"][...] = rng.standard_normal(layer.params["w"].shape)
    x = rng.standard_normal((2, 1, 6, 6))
    a = layer.forward(x)
    b = layer.forward(x)
    assert np.array_equal(a, b)
