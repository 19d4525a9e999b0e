import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dronedet.errors import ConfigError
from dronedet.tensor import (BatchNorm, ConvParams, apply_activation, batch_norm,
                             concat_channels, conv2d, fold_batch_norm, maxpool,
                             upsample_nearest)
from oracles import naive_conv2d, naive_maxpool


def params(w, b=None, **kw):
    w = np.asarray(w, np.float32)
    b = np.zeros(w.shape[0], np.float32) if b is None else np.asarray(b, np.float32)
    return ConvParams(w, b, **kw)


def test_conv_6x6_kernel3_stride2_is_2x2():
    x = np.arange(36, dtype=np.float32).reshape(1, 1, 6, 6)
    y = conv2d(x, params(np.ones((1, 1, 3, 3)), stride=2))
    assert y.shape == (1, 1, 2, 2)
    # window sums at rows/cols 0 and 2
    assert y[0, 0, 0, 0] == x[0, 0, :3, :3].sum()
    assert y[0, 0, 1, 1] == x[0, 0, 2:5, 2:5].sum()


def test_conv_identity_kernel():
    x = np.random.default_rng(1).standard_normal((1, 1, 7, 5)).astype(np.float32)
    np.testing.assert_array_equal(conv2d(x, params(np.ones((1, 1, 1, 1)))), x)


def test_conv_matches_loop_reference():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    got = conv2d(x, params(w, b, stride=1, pad=1))
    ref = np.array(naive_conv2d(x[0].tolist(), w.tolist(), b.tolist(), 1, 1))
    np.testing.assert_allclose(got[0], ref, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(3, 8), w=st.integers(3, 8), k=st.integers(1, 3))
def test_conv_valid_dims(h, w, k):
    x = np.zeros((1, 2, h, w), np.float32)
    y = conv2d(x, params(np.zeros((4, 2, k, k))))
    assert y.shape == (1, 4, h - k + 1, w - k + 1)


def test_conv_errors():
    x = np.zeros((1, 3, 4, 4), np.float32)
    with pytest.raises(ConfigError):
        conv2d(x, params(np.zeros((1, 2, 3, 3))))
    with pytest.raises(ConfigError):
        conv2d(x, params(np.zeros((1, 3, 5, 5))))


def test_activations():
    assert apply_activation(5.0, "relu") == 5.0
    assert apply_activation(-3.0, "relu") == 0.0
    assert apply_activation(-3.0, "leaky") == pytest.approx(-0.3)
    assert apply_activation(-3.0, "linear") == -3.0
    arr = np.array([-2.0, 0.0, 2.0], np.float32)
    np.testing.assert_allclose(apply_activation(arr, "leaky"), [-0.2, 0.0, 2.0], rtol=1e-6)
    with pytest.raises(ConfigError):
        apply_activation(1.0, "mish")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, width=32), min_size=1, max_size=30))
def test_identity_batch_norm_is_near_identity(values):
    x = np.array(values, np.float32).reshape(1, 1, 1, -1)
    bn = BatchNorm(np.ones(1), np.zeros(1), np.zeros(1), np.ones(1))
    assert np.max(np.abs(batch_norm(x, bn) - x)) <= 1e-4


def test_batch_norm_folding_agrees():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
        bn = BatchNorm(rng.uniform(0.5, 2, 4), rng.standard_normal(4),
                       rng.standard_normal(4), rng.uniform(0.1, 3, 4))
        p = params(rng.standard_normal((4, 3, 3, 3)), pad=1, batch_norm=bn, activation="leaky")
        np.testing.assert_allclose(conv2d(x, fold_batch_norm(p)), conv2d(x, p), atol=1e-4)


def test_negative_variance_rejected():
    with pytest.raises(ConfigError):
        BatchNorm(np.ones(1), np.zeros(1), np.zeros(1), -np.ones(1))


def test_maxpool_hand_example():
    x = np.array([[1, 3, 2, 1], [4, 6, 5, 2], [7, 8, 9, 3], [1, 2, 3, 4]], np.float32)
    y = maxpool(x.reshape(1, 1, 4, 4), 2, 2, 0)
    np.testing.assert_array_equal(y[0, 0], [[6, 5], [8, 9]])


def test_maxpool_constant_and_same_size():
    x = np.full((1, 2, 13, 13), 3.5, np.float32)
    y = maxpool(x, 2, 1, 1)
    assert y.shape == (1, 2, 13, 13)
    assert np.all(y == 3.5)
    assert maxpool(np.full((1, 1, 8, 8), 2.0), 2, 2, 1).shape == (1, 1, 4, 4)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(2, 8), w=st.integers(2, 8), size=st.integers(1, 3),
       stride=st.integers(1, 2), pad=st.integers(0, 2), seed=st.integers(0, 2**16))
def test_maxpool_dominates_window(h, w, size, stride, pad, seed):
    if (h + pad - size) // stride + 1 < 1 or (w + pad - size) // stride + 1 < 1:
        return
    x = np.random.default_rng(seed).standard_normal((1, 2, h, w)).astype(np.float32)
    y = maxpool(x, size, stride, pad)
    ref = np.array(naive_maxpool(x[0].tolist(), size, stride, pad))
    np.testing.assert_array_equal(y[0], ref.astype(np.float32))
    if pad >= size:
        return  # windows made only of padding are -inf
    # every output is one of the inputs of its channel
    for c in range(2):
        assert np.isin(y[0, c], x[0, c]).all()


def test_upsample_examples():
    x = np.array([[1, 2], [3, 4]], np.float32).reshape(1, 1, 2, 2)
    np.testing.assert_array_equal(
        upsample_nearest(x, 2)[0, 0],
        [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])
    assert upsample_nearest(np.zeros((1, 8, 13, 13)), 2).shape == (1, 8, 26, 26)
    np.testing.assert_array_equal(upsample_nearest(np.full((1, 1, 1, 1), 7.0), 2), np.full((1, 1, 2, 2), 7.0))


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 6), w=st.integers(1, 6), f=st.integers(1, 4), seed=st.integers(0, 999))
def test_upsample_then_pool_recovers(h, w, f, seed):
    x = np.random.default_rng(seed).standard_normal((1, 3, h, w)).astype(np.float32)
    np.testing.assert_array_equal(maxpool(upsample_nearest(x, f), f, f, 0), x)


def test_concat_channels():
    a = np.random.default_rng(0).standard_normal((1, 128, 26, 26)).astype(np.float32)
    b = np.random.default_rng(1).standard_normal((1, 256, 26, 26)).astype(np.float32)
    y = concat_channels(a, b)
    assert y.shape == (1, 384, 26, 26)
    np.testing.assert_array_equal(y[:, :128], a)
    np.testing.assert_array_equal(y[:, 128:], b)
    assert concat_channels(np.zeros((1, 128, 52, 52)), np.zeros((1, 128, 52, 52))).shape == (1, 256, 52, 52)
    np.testing.assert_array_equal(concat_channels(a, np.zeros((1, 0, 26, 26))), a)
    with pytest.raises(ConfigError):
        concat_channels(a, np.zeros((1, 4, 13, 13)))
