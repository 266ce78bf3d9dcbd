"""Reference convolution results.

conv2d_valid is the contractual oracle: a direct quadruple loop with no
dependence on the simulator's dataflow.  conv2d_fast is a vectorized
shift-accumulate version used where the naive loop would dominate runtime; it
is itself tested against conv2d_valid.  Both compute cross-correlation (no
kernel flip) in int64, which covers int8 activations and weights with int32
accumulators without overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelCountMismatch, ShapeMismatch
from .workload import LayerConfig


def _check_2d(arr, name):
    arr = np.asarray(arr, dtype=np.int64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def conv2d_valid(ifmap, kernel, stride: int = 1) -> np.ndarray:
    """Single-channel valid-mode convolution, elementwise loop."""
    ifmap = _check_2d(ifmap, "ifmap")
    kernel = _check_2d(kernel, "kernel")
    kh, kw = kernel.shape
    if kh != kw:
        raise ShapeMismatch("kernel must be square")
    h, w = ifmap.shape
    if kh > h or kw > w:
        raise ShapeMismatch("kernel larger than ifmap")
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    out = np.zeros((out_h, out_w), dtype=np.int64)
    for oy in range(out_h):
        for ox in range(out_w):
            acc = 0
            for ky in range(kh):
                for kx in range(kw):
                    acc += ifmap[oy * stride + ky, ox * stride + kx] \
                        * kernel[ky, kx]
            out[oy, ox] = acc
    return out


def conv2d_fast(ifmap, kernel, stride: int = 1) -> np.ndarray:
    """Vectorized equivalent of conv2d_valid (one shifted view per weight)."""
    ifmap = _check_2d(ifmap, "ifmap")
    kernel = _check_2d(kernel, "kernel")
    kh, kw = kernel.shape
    if kh != kw:
        raise ShapeMismatch("kernel must be square")
    h, w = ifmap.shape
    if kh > h or kw > w:
        raise ShapeMismatch("kernel larger than ifmap")
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    out = np.zeros((out_h, out_w), dtype=np.int64)
    for ky in range(kh):
        for kx in range(kw):
            view = ifmap[ky:ky + out_h * stride:stride,
                         kx:kx + out_w * stride:stride]
            out += kernel[ky, kx] * view
    return out


def pad_ifmap(ifmap, padding: int) -> np.ndarray:
    ifmap = _check_2d(ifmap, "ifmap")
    if padding == 0:
        return ifmap
    return np.pad(ifmap, padding, mode="constant")


@dataclass
class GoldenResult:
    """Per-filter output planes plus the multiply-accumulate count."""

    ofmaps: list
    macs: int


def conv_layer(layer: LayerConfig, ifmaps, filters, fast=True) -> GoldenResult:
    """Full layer: per-filter sum over channels of padded 2-D convolutions."""
    if len(ifmaps) != layer.in_channels:
        raise ChannelCountMismatch(
            f"expected {layer.in_channels} ifmaps, got {len(ifmaps)}")
    if len(filters) != layer.num_filters:
        raise ChannelCountMismatch(
            f"expected {layer.num_filters} filters, got {len(filters)}")
    conv = conv2d_fast if fast else conv2d_valid
    padded = [pad_ifmap(ch, layer.padding) for ch in ifmaps]
    out = []
    for bank in filters:
        if len(bank) != layer.in_channels:
            raise ChannelCountMismatch(
                f"filter bank has {len(bank)} kernels, "
                f"expected {layer.in_channels}")
        acc = np.zeros((layer.out_height, layer.out_width), dtype=np.int64)
        for ch, kern in zip(padded, bank):
            acc += conv(ch, kern, layer.stride)
        out.append(acc)
    macs = (layer.kernel_size ** 2 * layer.in_channels
            * layer.out_height * layer.out_width * layer.num_filters)
    return GoldenResult(ofmaps=out, macs=macs)


def conv_via_tiles(ifmap, kernel, hw_kernel: int) -> np.ndarray:
    """Recompose a large-kernel convolution from hardware-sized sub-kernels.

    Each sub-kernel at offset (dr, dc) is applied to the input shifted by
    (dr, dc) with a zero halo, and the partial outputs are summed.  Must
    equal conv2d_valid with the whole kernel; used to pin the tiling scheme.
    """
    from .workload import pad_kernel_tiles

    ifmap = _check_2d(ifmap, "ifmap")
    kernel = _check_2d(kernel, "kernel")
    big = kernel.shape[0]
    out_h = ifmap.shape[0] - big + 1
    out_w = ifmap.shape[1] - big + 1
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch("kernel larger than ifmap")
    tiles = pad_kernel_tiles(kernel, hw_kernel)
    tiles_per_side = round(len(tiles) ** 0.5)
    region_h = out_h + hw_kernel - 1
    region_w = out_w + hw_kernel - 1
    acc = np.zeros((out_h, out_w), dtype=np.int64)
    for idx, tile in enumerate(tiles):
        dr = (idx // tiles_per_side) * hw_kernel
        dc = (idx % tiles_per_side) * hw_kernel
        region = np.zeros((region_h, region_w), dtype=np.int64)
        src = ifmap[dr:dr + region_h, dc:dc + region_w]
        region[:src.shape[0], :src.shape[1]] = src
        acc += conv2d_fast(region, tile)
    return acc
