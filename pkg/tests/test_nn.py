import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_differences, max_relative_error, random_cnn
from gmwsgd import nn
from gmwsgd.errors import DimensionError, NumericError, ShapeError, UsageError


# ---------------------------------------------------------------- oracles


def naive_forward(spec, weights, biases, x):
    """Direct nested-loop evaluation, written independently of the engine."""
    out = x.copy()
    for layer, w, b in zip(spec.layers, weights, biases):
        if isinstance(layer, nn.Conv2d):
            n, c, h, wd = out.shape
            p, s = layer.padding, layer.stride
            padded = np.zeros((n, c, h + 2 * p, wd + 2 * p))
            padded[:, :, p : p + h, p : p + wd] = out
            ho = (h + 2 * p - layer.kernel_h) // s + 1
            wo = (wd + 2 * p - layer.kernel_w) // s + 1
            res = np.zeros((n, layer.out_channels, ho, wo))
            for i in range(n):
                for o in range(layer.out_channels):
                    for r in range(ho):
                        for q in range(wo):
                            acc = b[o]
                            for ci in range(c):
                                for u in range(layer.kernel_h):
                                    for v in range(layer.kernel_w):
                                        acc += w[o, ci, u, v] * padded[i, ci, r * s + u, q * s + v]
                            res[i, o, r, q] = acc
            out = res
        elif isinstance(layer, nn.MaxPool):
            n, c, h, wd = out.shape
            ho = (h - layer.k) // layer.stride + 1
            wo = (wd - layer.k) // layer.stride + 1
            res = np.zeros((n, c, ho, wo))
            for i in range(n):
                for ci in range(c):
                    for r in range(ho):
                        for q in range(wo):
                            r0, q0 = r * layer.stride, q * layer.stride
                            res[i, ci, r, q] = out[i, ci, r0 : r0 + layer.k, q0 : q0 + layer.k].max()
            out = res
        elif isinstance(layer, nn.ReLU):
            out = np.where(out > 0, out, 0.0)
        elif isinstance(layer, nn.Flatten):
            out = out.reshape(len(out), -1)
        else:
            out = np.array([[sum(w[j, k] * row[k] for k in range(len(row))) + b[j] for j in range(w.shape[0])] for row in out])
    return out


# ---------------------------------------------------------------- param_count


def test_param_count_mlp():
    assert nn.param_count(nn.mlp_spec([4, 3, 2])) == 4 * 3 + 3 + 3 * 2 + 2 == 23


def test_param_count_single_conv():
    spec = nn.NetworkSpec((3, 8, 8), (nn.Conv2d(3, 8, 3, 3),))
    assert nn.param_count(spec) == 224


def test_default_cifar_count_matches_hand_summation():
    per_layer = [
        6 * 3 * 5 * 5 + 6,  # conv 3->6, 5x5
        7 * 6 * 3 * 3 + 7,  # conv 6->7, 3x3
        (7 * 8 * 8) * 126 + 126,  # 28 -> pool 14 -> pad-2 conv 16 -> pool 8
        126 * 10 + 10,
    ]
    spec = nn.default_cifar_spec()
    assert nn.param_count(spec) == sum(per_layer) == 58685
    assert nn.flatten(nn.Network.zeros(spec)).size == 58685


def test_inconsistent_spec_names_layer_pair():
    with pytest.raises(ShapeError, match=r"layer 1 \(relu\) -> layer 2 \(dense\(5,2\)\)"):
        nn.NetworkSpec((4,), (nn.Dense(4, 3), nn.ReLU(), nn.Dense(5, 2)))


@given(st.lists(st.integers(1, 12), min_size=2, max_size=5))
def test_param_count_is_additive(sizes):
    spec = nn.mlp_spec(sizes)
    parts = [nn.param_count(nn.NetworkSpec((l.in_features,), (l,))) for l in spec.layers if isinstance(l, nn.Dense)]
    assert nn.param_count(spec) == sum(parts)


def test_spec_text_round_trip():
    spec = nn.default_cifar_spec()
    again = nn.NetworkSpec.from_dict(spec.to_dict())
    assert again == spec


def test_unknown_layer_rejected():
    with pytest.raises(UsageError):
        nn.NetworkSpec.from_text("dense(2,2) softplus", (2,))


# ---------------------------------------------------------------- flatten / load


def test_flatten_layout_weights_then_biases():
    net = nn.Network.zeros(nn.mlp_spec([2, 1]))
    net.weights[0][:] = [[0.5, -0.5]]
    net.biases[0][:] = [0.1]
    np.testing.assert_array_equal(nn.flatten(net), [0.5, -0.5, 0.1])


def test_flatten_orders_all_weights_before_biases():
    spec = nn.mlp_spec([2, 2, 1])
    net = nn.Network.from_vector(spec, np.arange(nn.param_count(spec), dtype=float))
    np.testing.assert_array_equal(net.weights[0].ravel(), [0, 1, 2, 3])
    np.testing.assert_array_equal(net.weights[2].ravel(), [4, 5])
    np.testing.assert_array_equal(net.biases[0], [6, 7])
    np.testing.assert_array_equal(net.biases[2], [8])


def test_round_trip_random_networks():
    rng = np.random.default_rng(0)
    for _ in range(100):
        spec = random_cnn(rng)
        net = nn.Network.uniform(spec, rng, -1, 1)
        p = nn.flatten(net)
        assert p.size == nn.param_count(spec)
        again = nn.load(nn.Network.zeros(spec), p)
        assert again == net
        for a, b in zip(again.weights + again.biases, net.weights + net.biases):
            if a is not None:
                assert a.tobytes() == b.tobytes()
        q = rng.standard_normal(p.size)
        np.testing.assert_array_equal(nn.flatten(nn.load(net, q)), q)


def test_zero_vector_gives_uniform_softmax():
    spec = random_cnn(np.random.default_rng(3))
    net = nn.load(nn.Network.uniform(spec, np.random.default_rng(1)), np.zeros(nn.param_count(spec)))
    x = np.random.default_rng(2).standard_normal((5,) + spec.input_shape)
    logits = nn.forward(net, x)
    assert np.all(logits == 0)
    probs = np.exp(nn.log_softmax(logits))
    np.testing.assert_allclose(probs, 1.0 / spec.n_classes)


def test_load_rejects_wrong_length_and_non_finite():
    spec = nn.mlp_spec([3, 2])
    net = nn.Network.zeros(spec)
    with pytest.raises(DimensionError):
        nn.load(net, np.zeros(nn.param_count(spec) + 1))
    bad = np.zeros(nn.param_count(spec))
    bad[4] = np.nan
    with pytest.raises(NumericError, match="index 4"):
        nn.load(net, bad)


# ---------------------------------------------------------------- forward


def test_identity_convolution_reproduces_input():
    spec = nn.NetworkSpec((1, 4, 5), (nn.Conv2d(1, 1, 1, 1),))
    net = nn.Network.zeros(spec)
    net.weights[0][:] = 1.0
    x = np.random.default_rng(0).standard_normal((2, 1, 4, 5))
    logits, _ = nn._forward(net, x)
    np.testing.assert_array_equal(logits, x)


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(7)
    for _ in range(5):
        spec = random_cnn(rng)
        net = nn.Network.uniform(spec, rng, -1, 1)
        x = rng.standard_normal((3,) + spec.input_shape)
        fast = nn.forward(net, x)
        slow = naive_forward(spec, net.weights, net.biases, x)
        np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-12)


def test_forward_is_pure_and_rejects_bad_shapes():
    spec = random_cnn(np.random.default_rng(11))
    net = nn.Network.uniform(spec, np.random.default_rng(0))
    before = nn.flatten(net).copy()
    x = np.random.default_rng(1).standard_normal((4,) + spec.input_shape)
    a, b = nn.forward(net, x), nn.forward(net, x)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(nn.flatten(net), before)
    with pytest.raises(DimensionError):
        nn.forward(net, np.zeros((4, 9)))


def test_convolution_with_stride_and_padding_shape():
    conv = nn.Conv2d(3, 5, 3, 3, stride=2, padding=1)
    assert conv.out_shape((3, 8, 8)) == (5, 4, 4)
    assert nn.MaxPool(3, 2).out_shape((5, 7, 7)) == (5, 3, 3)


# ---------------------------------------------------------------- loss / accuracy / regularizer


def test_ce_uniform_logits_is_log_classes():
    assert nn.ce_loss(np.zeros((7, 10)), np.arange(7)) == pytest.approx(math.log(10), abs=1e-15)


def test_ce_confident_correct_is_zero():
    logits = np.zeros((3, 4))
    labels = np.array([0, 2, 3])
    logits[np.arange(3), labels] = 1000.0
    assert nn.ce_loss(logits, labels) == pytest.approx(0.0, abs=1e-300)


def test_ce_matches_unshifted_formula():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = rng.uniform(-3, 3, (16, 6))
        y = rng.integers(0, 6, 16)
        direct = np.mean([-math.log(math.exp(s[i, y[i]]) / sum(math.exp(v) for v in s[i])) for i in range(16)])
        assert abs(nn.ce_loss(s, y) - direct) <= 1e-12


def test_ce_and_accuracy_reject_empty_batch():
    with pytest.raises(UsageError):
        nn.ce_loss(np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(UsageError):
        nn.accuracy(np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_accuracy_examples():
    y = np.array([0, 1, 1, 0, 1])
    assert nn.accuracy(np.eye(2)[y], y) == 1.0
    assert nn.accuracy(np.eye(2)[1 - y], y) == 0.0
    # ties resolve to the lowest class index
    assert nn.accuracy(np.zeros((3, 4)), np.zeros(3, dtype=int)) == 1.0


def test_accuracy_of_random_scores_is_chance():
    rng = np.random.default_rng(9)
    logits = rng.standard_normal((100_000, 10))
    labels = rng.integers(0, 10, 100_000)
    assert abs(nn.accuracy(logits, labels) - 0.1) < 0.01


def test_l2_regularizer():
    assert nn.l2_regularizer(np.zeros(5)) == 0.0
    assert nn.l2_regularizer(np.array([3.0, 4.0])) == 25.0
    p = np.random.default_rng(2).standard_normal(10_000) * 1e3
    exact = math.fsum(float(v) * float(v) for v in p)
    assert abs(nn.l2_regularizer(p) - exact) <= 1e-10 * exact


# ---------------------------------------------------------------- backward


def test_zero_gradient_at_symmetric_stationary_point():
    net = nn.Network.zeros(nn.mlp_spec([3, 4]))
    x = np.tile([0.3, -1.2, 2.0], (8, 1))
    y = np.repeat(np.arange(4), 2)
    loss, grads = nn.backward(net, x, y)
    assert loss == pytest.approx(math.log(4))
    np.testing.assert_allclose(grads.flat(), 0.0, atol=1e-15)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(21)
    spec = random_cnn(rng)
    net = nn.Network.uniform(spec, rng, -0.5, 0.5)
    x = rng.standard_normal((4,) + spec.input_shape)
    y = rng.integers(0, spec.n_classes, 4)
    loss, grads = nn.backward(net, x, y)
    assert loss == nn.ce_loss(nn.forward(net, x), y)
    assert max_relative_error(grads.flat(), central_differences(net, x, y)) <= 1e-4


def test_last_bias_gradient_is_mean_residual():
    rng = np.random.default_rng(4)
    spec = nn.mlp_spec([5, 6, 3])
    net = nn.Network.uniform(spec, rng, -1, 1)
    x = rng.standard_normal((10, 5))
    y = rng.integers(0, 3, 10)
    _, grads = nn.backward(net, x, y)
    probs = np.exp(nn.log_softmax(nn.forward(net, x)))
    expected = (probs - np.eye(3)[y]).mean(axis=0)
    np.testing.assert_allclose(grads.biases[-1], expected, rtol=1e-12, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gradient_property_random_mlps(seed):
    rng = np.random.default_rng(seed)
    sizes = list(rng.integers(2, 6, size=int(rng.integers(2, 4))))
    spec = nn.mlp_spec(sizes)
    net = nn.Network.uniform(spec, rng, -1, 1)
    x = rng.standard_normal((3, sizes[0]))
    y = rng.integers(0, sizes[-1], 3)
    _, grads = nn.backward(net, x, y)
    assert max_relative_error(grads.flat(), central_differences(net, x, y)) <= 1e-4
