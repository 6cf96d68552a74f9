import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlconvnet.errors import BackwardBeforeForwardError, ShapeError
from tlconvnet.nn import Conv1D, Dense, Dropout, Flatten, MaxPool1D, ReLU, Sequential, Sigmoid, activation_apply, sigmoid

from oracles import conv1d_naive, matvec_naive, maxpool_naive


def conv_with(weight, bias, stride=1):
    filters, in_ch, k = np.shape(weight)
    layer = Conv1D(in_ch, filters, k, stride)
    layer.weight = np.array(weight, dtype=np.float32)
    layer.bias = np.array(bias, dtype=np.float32)
    return layer


class TestConv1D:
    def test_difference_kernel(self):
        out = conv_with([[[1, 0, -1]]], [0]).forward(np.array([[1.0], [2], [3], [4]]))
        np.testing.assert_array_equal(out[:, 0], [-2, -2])

    def test_strided_sum_with_bias(self):
        out = conv_with([[[1, 1]]], [1], stride=2).forward(np.array([[1.0], [2], [3], [4]]))
        np.testing.assert_array_equal(out[:, 0], [4, 8])

    def test_identity_kernel(self):
        x = np.arange(6, dtype=np.float32)[:, None]
        np.testing.assert_array_equal(conv_with([[[1]]], [0]).forward(x), x)

    def test_output_length(self):
        assert Conv1D(1, 4, 3).forward(np.zeros((113, 1))).shape == (111, 4)

    def test_too_short_input(self):
        with pytest.raises(ShapeError):
            Conv1D(1, 4, 3).forward(np.zeros((2, 1)))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            Conv1D(2, 4, 3).forward(np.zeros((10, 1)))

    def test_backward_needs_forward(self):
        with pytest.raises(BackwardBeforeForwardError):
            Conv1D(1, 1, 3).backward(np.zeros((3, 1)))

    def test_infer_forward_clears_cache(self):
        layer = Conv1D(1, 1, 3)
        layer.forward(np.zeros((5, 1)), train=True)
        layer.forward(np.zeros((5, 1)))
        with pytest.raises(BackwardBeforeForwardError):
            layer.backward(np.zeros((3, 1)))

    @settings(max_examples=60, deadline=None)
    @given(
        length=st.integers(1, 20),
        in_ch=st.integers(1, 3),
        filters=st.integers(1, 4),
        k=st.integers(1, 5),
        stride=st.integers(1, 3),
        seed=st.integers(0, 2**31),
    )
    def test_matches_nested_loop_oracle(self, length, in_ch, filters, k, stride, seed):
        if length < k:
            return
        r = np.random.default_rng(seed)
        layer = Conv1D(in_ch, filters, k, stride, rng=r)
        layer.bias = r.standard_normal(filters).astype(np.float32)
        x = r.standard_normal((length, in_ch)).astype(np.float32)
        expected = conv1d_naive(x, layer.weight, layer.bias, stride)
        np.testing.assert_allclose(layer.forward(x), expected, atol=1e-5)

    def test_batched_equals_per_sample(self, rng):
        layer = Conv1D(2, 3, 3, rng=rng)
        x = rng.standard_normal((4, 9, 2)).astype(np.float32)
        batched = layer.forward(x)
        for i in range(4):
            np.testing.assert_allclose(batched[i], layer.forward(x[i]), atol=1e-6)


class TestMaxPool1D:
    def test_example(self):
        pool = MaxPool1D(2, 2)
        out = pool.forward(np.array([[1.0], [3], [2], [5]]), train=True)
        np.testing.assert_array_equal(out[:, 0], [3, 5])
        np.testing.assert_array_equal(pool.backward(np.ones((2, 1)))[:, 0], [0, 1, 0, 1])

    def test_ties_route_to_lowest_index(self):
        pool = MaxPool1D(3, 3)
        pool.forward(np.array([[2.0], [2], [2], [0], [7], [7]]), train=True)
        np.testing.assert_array_equal(pool.backward(np.array([[1.0], [1.0]]))[:, 0], [1, 0, 0, 0, 1, 0])

    def test_odd_length_drops_tail(self):
        assert MaxPool1D(2, 2).forward(np.zeros((111, 4))).shape == (55, 4)

    @settings(max_examples=60, deadline=None)
    @given(
        length=st.integers(1, 16),
        ch=st.integers(1, 3),
        width=st.integers(1, 4),
        stride=st.integers(1, 4),
        seed=st.integers(0, 2**31),
        ties=st.booleans(),
    )
    def test_matches_scan_oracle_and_conserves_gradient(self, length, ch, width, stride, seed, ties):
        if length < width:
            return
        r = np.random.default_rng(seed)
        x = r.integers(0, 3, (length, ch)).astype(np.float64) if ties else r.standard_normal((length, ch))
        pool = MaxPool1D(width, stride)
        out = pool.forward(x, train=True)
        expected, pos = maxpool_naive(x, width, stride)
        np.testing.assert_array_equal(out, expected)
        np.testing.assert_array_equal(pool.argmax_positions()[0], pos)
        g = r.standard_normal(out.shape)
        dx = pool.backward(g)
        np.testing.assert_allclose(dx.sum(axis=0), g.sum(axis=0), atol=1e-9)
        # gradient lands only on selected positions
        routed = np.zeros_like(x)
        for t in range(out.shape[0]):
            for c in range(ch):
                routed[pos[t, c], c] += g[t, c]
        np.testing.assert_allclose(dx, routed, atol=1e-12)


class TestDropout:
    def test_infer_is_identity(self, rng):
        x = rng.standard_normal((5, 7, 3))
        np.testing.assert_array_equal(Dropout(0.5).forward(x), x)

    def test_mean_preserved(self):
        out = Dropout(0.5).forward(np.ones(10**6, dtype=np.float32), train=True, rng=np.random.default_rng(0))
        assert 0.99 <= out.mean() <= 1.01

    def test_retain_one_is_identity_in_training(self, rng):
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(Dropout(1.0).forward(x, train=True), x)

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
    def test_invalid_probability(self, p):
        with pytest.raises(ValueError):
            Dropout(p)

    def test_training_needs_generator(self):
        with pytest.raises(ValueError):
            Dropout(0.5).forward(np.ones(3), train=True)

    def test_backward_uses_same_mask(self):
        d = Dropout(0.5)
        out = d.forward(np.ones(1000), train=True, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(d.backward(np.ones(1000)), out)

    def test_same_seed_same_mask(self):
        a = Dropout(0.3).forward(np.ones(100), train=True, rng=np.random.default_rng(9))
        b = Dropout(0.3).forward(np.ones(100), train=True, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)


class TestDense:
    def test_example(self):
        d = Dense(2, 2)
        d.weight = np.array([[1.0, 0], [0, 1]], dtype=np.float32)
        d.bias = np.array([1.0, 1], dtype=np.float32)
        np.testing.assert_array_equal(d.forward(np.array([2.0, 6])), [3, 7])

    @settings(max_examples=30, deadline=None)
    @given(n_in=st.integers(1, 6), units=st.integers(1, 4), seed=st.integers(0, 2**31))
    def test_matches_loop(self, n_in, units, seed):
        r = np.random.default_rng(seed)
        d = Dense(n_in, units, rng=r)
        d.bias = r.standard_normal(units).astype(np.float32)
        x = r.standard_normal(n_in).astype(np.float32)
        np.testing.assert_allclose(d.forward(x), matvec_naive(d.weight.tolist(), d.bias.tolist(), x.tolist()), atol=1e-5)

    def test_wrong_width(self):
        with pytest.raises(ShapeError):
            Dense(3, 1).forward(np.zeros(4))


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(activation_apply(np.array([-1.0, 0, 2]), "relu"), [0, 0, 2])

    def test_sigmoid_values(self):
        np.testing.assert_allclose(sigmoid(np.array([0.0])), [0.5])
        assert sigmoid(np.array([1000.0]))[0] == 1.0
        assert sigmoid(np.array([-1000.0]))[0] == 0.0
        assert np.all(np.isfinite(sigmoid(np.array([-1e4, 1e4]))))

    def test_unknown(self):
        with pytest.raises(ValueError):
            activation_apply(np.zeros(2), "tanh")


LAYER_CASES = [
    ("conv", lambda r: Conv1D(2, 3, 3, 1, rng=r), (9, 2)),
    ("conv_strided", lambda r: Conv1D(1, 2, 2, 2, rng=r), (8, 1)),
    ("pool", lambda r: MaxPool1D(2, 2), (7, 3)),
    ("dropout", lambda r: Dropout(0.5), (6, 2)),
    ("relu", lambda r: ReLU(), (5, 2)),
    ("sigmoid", lambda r: Sigmoid(), (4,)),
    ("flatten", lambda r: Flatten(), (5, 2)),
    ("dense", lambda r: Dense(4, 3, rng=r), (4,)),
]


@pytest.mark.parametrize("name,make,shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
@settings(max_examples=15, deadline=None)
@given(batch=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_backward_shape_equals_input_shape(name, make, shape, batch, seed):
    r = np.random.default_rng(seed)
    layer = make(r)
    x = r.standard_normal((batch, *shape)).astype(np.float32)
    out = layer.forward(x, train=True, rng=r)
    assert out.shape == (batch, *layer.output_shape(shape))
    assert layer.backward(np.ones_like(out)).shape == x.shape


@pytest.mark.parametrize("name,make,shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
def test_infer_forward_is_deterministic(name, make, shape, rng):
    layer = make(rng)
    x = rng.standard_normal((2, *shape)).astype(np.float32)
    np.testing.assert_array_equal(layer.forward(x), layer.forward(x))


def test_sequential_chains_shapes(rng):
    net = Sequential([Conv1D(1, 4, 3, rng=rng), ReLU(), MaxPool1D(), Flatten(), Dense(16, 1, rng=rng), Sigmoid()])
    out = net.forward(rng.standard_normal((3, 10, 1)), train=True, rng=rng)
    assert out.shape == (3, 1)
    assert net.backward(np.ones((3, 1))).shape == (3, 10, 1)
    assert len(net.trainable()) == 4


def test_conv_identity_kernel_passes_gradient_through():
    layer = conv_with([[[1]]], [0])
    layer.forward(np.array([[1.0], [2], [3], [4]]), train=True)
    np.testing.assert_array_equal(layer.backward(np.ones((4, 1))), np.ones((4, 1)))


def test_conv_zero_upstream_gives_zero_gradients(rng):
    layer = Conv1D(2, 3, 3, rng=rng)
    layer.forward(rng.standard_normal((2, 8, 2)), train=True)
    dx = layer.backward(np.zeros((2, 6, 3)))
    assert not dx.any() and not layer.grads["weight"].any() and not layer.grads["bias"].any()


def test_pool_constant_input_picks_first_of_each_window():
    pool = MaxPool1D(2, 2)
    out = pool.forward(np.full((4, 1), 7.0), train=True)
    np.testing.assert_array_equal(out[:, 0], [7, 7])
    np.testing.assert_array_equal(pool.argmax_positions()[0, :, 0], [0, 2])


def test_dense_identity():
    d = Dense(3, 3)
    d.weight = np.eye(3, dtype=np.float32)
    d.bias = np.zeros(3, dtype=np.float32)
    np.testing.assert_array_equal(d.forward(np.array([1.0, -2, 5])), [1, -2, 5])


def test_dense_matrix_example():
    d = Dense(2, 2)
    d.weight = np.array([[1.0, 2], [3, 4]], dtype=np.float32)
    d.bias = np.zeros(2, dtype=np.float32)
    np.testing.assert_array_equal(d.forward(np.array([1.0, 1])), [3, 7])
