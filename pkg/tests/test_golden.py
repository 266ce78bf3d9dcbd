import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triconv.errors import ChannelCountMismatch, ShapeMismatch
from triconv.golden import (
    conv2d_fast,
    conv2d_valid,
    conv_layer,
    conv_via_tiles,
    pad_ifmap,
)
from triconv.workload import LayerConfig, random_filters, random_ifmaps


def test_conv2d_valid_hand_example():
    image = np.arange(1, 17).reshape(4, 4)
    kernel = np.array([[1, 0], [0, -1]])
    # each output is top-left minus bottom-right, always -5 here
    out = conv2d_valid(image, kernel)
    assert out.shape == (3, 3)
    assert (out == -5).all()


def test_conv2d_valid_no_kernel_flip():
    image = np.zeros((3, 3), dtype=np.int64)
    image[0, 2] = 1
    kernel = np.zeros((3, 3), dtype=np.int64)
    kernel[0, 2] = 7
    # correlation keeps the weight aligned with the same corner
    assert conv2d_valid(image, kernel)[0, 0] == 7


def test_conv2d_stride():
    image = np.arange(25).reshape(5, 5)
    kernel = np.ones((3, 3), dtype=np.int64)
    out = conv2d_valid(image, kernel, stride=2)
    assert out.shape == (2, 2)
    assert out[0, 0] == image[0:3, 0:3].sum()
    assert out[1, 1] == image[2:5, 2:5].sum()


@pytest.mark.parametrize("bad", [
    np.zeros((2, 3)),          # not square
    np.zeros((6, 6)),          # larger than ifmap
])
def test_conv2d_kernel_shape_errors(bad):
    with pytest.raises(ShapeMismatch):
        conv2d_valid(np.zeros((5, 5)), bad)


def test_conv2d_rejects_3d():
    with pytest.raises(ShapeMismatch):
        conv2d_valid(np.zeros((2, 2, 2)), np.zeros((2, 2)))


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(3, 12), w=st.integers(3, 12),
    k=st.integers(1, 3), stride=st.integers(1, 2),
    seed=st.integers(0, 2**32 - 1),
)
def test_fast_matches_valid(h, w, k, stride, seed):
    rng = np.random.default_rng(seed)
    image = rng.integers(-128, 128, size=(h, w))
    kernel = rng.integers(-128, 128, size=(k, k))
    want = conv2d_valid(image, kernel, stride)
    assert np.array_equal(conv2d_fast(image, kernel, stride), want)


def test_pad_ifmap():
    image = np.ones((2, 2), dtype=np.int64)
    padded = pad_ifmap(image, 1)
    assert padded.shape == (4, 4)
    assert padded.sum() == 4
    assert padded[0].sum() == 0
    assert pad_ifmap(image, 0) is image


def test_conv_layer_sums_channels():
    layer = LayerConfig(6, 5, 2, 3, 3, 1, 1)
    ifm = random_ifmaps(layer, seed=2)
    flt = random_filters(layer, seed=2)
    got = conv_layer(layer, ifm, flt)
    assert len(got.ofmaps) == 3
    assert got.ofmaps[0].shape == (5, 6)
    want = sum(conv2d_valid(pad_ifmap(ifm[c], 1), flt[0][c])
               for c in range(2))
    assert np.array_equal(got.ofmaps[0], want)
    assert got.macs == 9 * 2 * 5 * 6 * 3


def test_conv_layer_slow_path_agrees():
    layer = LayerConfig(7, 6, 2, 2, 3)
    ifm = random_ifmaps(layer, seed=5)
    flt = random_filters(layer, seed=5)
    fast = conv_layer(layer, ifm, flt, fast=True)
    slow = conv_layer(layer, ifm, flt, fast=False)
    assert all(np.array_equal(a, b)
               for a, b in zip(fast.ofmaps, slow.ofmaps))


def test_conv_layer_channel_mismatch():
    layer = LayerConfig(6, 6, 2, 1, 3)
    ifm = random_ifmaps(layer, seed=0)
    flt = random_filters(layer, seed=0)
    with pytest.raises(ChannelCountMismatch):
        conv_layer(layer, ifm[:1], flt)
    with pytest.raises(ChannelCountMismatch):
        conv_layer(layer, ifm, [flt[0][:1]])


@settings(max_examples=40, deadline=None)
@given(
    big=st.integers(4, 8), extra=st.integers(0, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_tiled_conv_matches_whole_kernel(big, extra, seed):
    rng = np.random.default_rng(seed)
    side = big + extra
    image = rng.integers(-128, 128, size=(side, side))
    kernel = rng.integers(-128, 128, size=(big, big))
    want = conv2d_valid(image, kernel)
    assert np.array_equal(conv_via_tiles(image, kernel, 3), want)


def test_tiled_conv_exact_fit():
    # hardware kernel equal to the layer kernel degenerates to one tile
    rng = np.random.default_rng(9)
    image = rng.integers(-9, 9, size=(6, 7))
    kernel = rng.integers(-9, 9, size=(3, 3))
    assert np.array_equal(conv_via_tiles(image, kernel, 3),
                          conv2d_valid(image, kernel))
