"""Layer and array configuration.

Holds the convolution layer descriptions (including the built-in VGG-16 and
AlexNet tables), the hardware array parameters, and the tiling planner that
maps a layer onto the core/slice grid.  Kernels larger than the hardware
window are split into zero-padded sub-kernels, one per core, and layers whose
channel or filter counts exceed the array are serialized into passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    InvalidArch,
    IoError,
    KernelLargerThanPaddedIfmap,
    NonPositiveDim,
    StrideIndivisible,
    UnsupportedStrideForSim,
)


@dataclass(frozen=True)
class LayerConfig:
    """One convolution layer: ifmap geometry, filter bank, stride, padding."""

    width: int
    height: int
    in_channels: int
    num_filters: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("width", "height", "in_channels", "num_filters",
                     "kernel_size", "stride"):
            if getattr(self, name) < 1:
                raise NonPositiveDim(f"{name} must be >= 1")
        if self.padding < 0:
            raise NonPositiveDim("padding must be >= 0")
        for span, name in ((self.padded_width, "width"),
                           (self.padded_height, "height")):
            if self.kernel_size > span:
                raise KernelLargerThanPaddedIfmap(
                    f"kernel {self.kernel_size} exceeds padded {name} {span}")
            if (span - self.kernel_size) % self.stride != 0:
                raise StrideIndivisible(
                    f"stride {self.stride} does not divide padded {name} "
                    f"{span} minus kernel {self.kernel_size}")

    @property
    def padded_width(self) -> int:
        return self.width + 2 * self.padding

    @property
    def padded_height(self) -> int:
        return self.height + 2 * self.padding

    @property
    def out_width(self) -> int:
        return (self.padded_width - self.kernel_size) // self.stride + 1

    @property
    def out_height(self) -> int:
        return (self.padded_height - self.kernel_size) // self.stride + 1

    def as_tuple(self):
        return (self.width, self.height, self.in_channels, self.num_filters,
                self.kernel_size, self.stride, self.padding)


def make_layer_config(width, height, in_channels, num_filters, kernel_size,
                      stride=1, padding=0) -> LayerConfig:
    return LayerConfig(width, height, in_channels, num_filters, kernel_size,
                       stride, padding)


@dataclass(frozen=True)
class ArchConfig:
    """Array build parameters.

    cores:            input-parallel cores, each with its own recycling buffer
    slices_per_core:  output-parallel slices sharing one activation stream
    hw_kernel:        PE grid edge per slice (weights held stationary)
    buffer_capacity:  widest ifmap row the recycling buffer can track
    clock_freq_hz:    clock used for throughput figures
    shadow_enabled:   end-of-row reuse registers on (off models the prior
                      recycling scheme that re-fetches end-of-row activations)
    """

    cores: int = 8
    slices_per_core: int = 8
    hw_kernel: int = 3
    buffer_capacity: int = 256
    clock_freq_hz: int = 1_000_000_000
    shadow_enabled: bool = True

    def __post_init__(self):
        if self.cores < 1 or self.slices_per_core < 1:
            raise InvalidArch("cores and slices_per_core must be >= 1")
        if self.hw_kernel < 2:
            raise InvalidArch("hw_kernel must be >= 2")
        if self.buffer_capacity < self.hw_kernel + 2:
            raise InvalidArch("buffer_capacity must be >= hw_kernel + 2")
        if self.clock_freq_hz <= 0:
            raise InvalidArch("clock_freq_hz must be positive")

    @property
    def num_pes(self) -> int:
        return self.cores * self.slices_per_core * self.hw_kernel ** 2


@dataclass(frozen=True)
class TilingPlan:
    """How one layer is scheduled onto the array.

    sub_kernel_map lists (row, col) offsets of each hardware-sized sub-kernel
    inside the zero-padded layer kernel, in row-major tile order.  passes is
    the total number of serialized array passes:
    channel_groups * filter_groups * tile_rounds.
    """

    hw_kernel: int
    channel_groups: int
    filter_groups: int
    kernel_tiles: int
    sub_kernel_map: tuple
    cores_per_channel: int
    tile_rounds: int
    passes: int


def plan_tiling(layer: LayerConfig, arch: ArchConfig,
                simulator: bool = True) -> TilingPlan:
    """Build the pass schedule for a layer.

    With simulator=True the plan is for a cycle-accurate run, which only
    supports unit stride; analytics-only plans accept any stride.
    """
    if simulator and layer.stride != 1:
        raise UnsupportedStrideForSim(
            f"simulator handles stride 1 only, got {layer.stride}")
    k = arch.hw_kernel
    tiles_per_side = math.ceil(layer.kernel_size / k)
    offsets = tuple((i * k, j * k)
                    for i in range(tiles_per_side)
                    for j in range(tiles_per_side))
    kernel_tiles = tiles_per_side ** 2
    channel_groups = math.ceil(layer.in_channels / arch.cores)
    filter_groups = math.ceil(layer.num_filters / arch.slices_per_core)
    cores_per_channel = max(1, arch.cores // min(layer.in_channels, arch.cores))
    tile_rounds = math.ceil(kernel_tiles / cores_per_channel)
    return TilingPlan(
        hw_kernel=k,
        channel_groups=channel_groups,
        filter_groups=filter_groups,
        kernel_tiles=kernel_tiles,
        sub_kernel_map=offsets,
        cores_per_channel=cores_per_channel,
        tile_rounds=tile_rounds,
        passes=channel_groups * filter_groups * tile_rounds,
    )


def pad_kernel_tiles(kernel, hw_kernel: int):
    """Split a K x K kernel into hardware-sized zero-padded sub-kernels.

    Returns a row-major list of hw_kernel x hw_kernel int64 arrays whose
    supports partition the original kernel exactly.
    """
    kernel = np.asarray(kernel, dtype=np.int64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise NonPositiveDim("kernel must be square")
    big = kernel.shape[0]
    tiles_per_side = math.ceil(big / hw_kernel)
    padded = np.zeros((tiles_per_side * hw_kernel,) * 2, dtype=np.int64)
    padded[:big, :big] = kernel
    out = []
    for i in range(tiles_per_side):
        for j in range(tiles_per_side):
            r0, c0 = i * hw_kernel, j * hw_kernel
            out.append(padded[r0:r0 + hw_kernel, c0:c0 + hw_kernel].copy())
    return out


def tile_real_mask(layer_kernel_size: int, hw_kernel: int, row_off: int,
                   col_off: int) -> np.ndarray:
    """Boolean mask of sub-kernel positions that lie inside the real kernel."""
    rows = np.arange(hw_kernel) + row_off < layer_kernel_size
    cols = np.arange(hw_kernel) + col_off < layer_kernel_size
    return rows[:, None] & cols[None, :]


# --- built-in topologies -------------------------------------------------

_VGG16 = [
    (224, 224, 3, 64, 3, 1, 1),
    (224, 224, 64, 64, 3, 1, 1),
    (112, 112, 64, 128, 3, 1, 1),
    (112, 112, 128, 128, 3, 1, 1),
    (56, 56, 128, 256, 3, 1, 1),
    (56, 56, 256, 256, 3, 1, 1),
    (56, 56, 256, 256, 3, 1, 1),
    (28, 28, 256, 512, 3, 1, 1),
    (28, 28, 512, 512, 3, 1, 1),
    (28, 28, 512, 512, 3, 1, 1),
    (14, 14, 512, 512, 3, 1, 1),
    (14, 14, 512, 512, 3, 1, 1),
    (14, 14, 512, 512, 3, 1, 1),
]

_ALEXNET = [
    (227, 227, 3, 96, 11, 4, 0),
    (27, 27, 96, 256, 5, 1, 2),
    (13, 13, 256, 384, 3, 1, 1),
    (13, 13, 384, 384, 3, 1, 1),
    (13, 13, 384, 256, 3, 1, 1),
]


def vgg16_layers():
    return [LayerConfig(*t) for t in _VGG16]


def alexnet_layers():
    return [LayerConfig(*t) for t in _ALEXNET]


# --- plain-text layer files ----------------------------------------------

def parse_layer_line(line: str) -> LayerConfig:
    fields = line.split()
    if len(fields) != 7:
        raise IoError(f"expected 7 fields 'W H C F K S P', got {line!r}")
    try:
        values = [int(f) for f in fields]
    except ValueError as exc:
        raise IoError(f"non-integer field in {line!r}") from exc
    return LayerConfig(*values)


def load_layer_file(path) -> list:
    """Read a layer table: one 'W H C F K S P' line per layer, '#' comments."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    layers = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            layers.append(parse_layer_line(line))
    if not layers:
        raise IoError(f"no layers found in {path}")
    return layers


def format_layer_file(layers, title="") -> str:
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("# W H C F K S P")
    for lyr in layers:
        lines.append(" ".join(str(v) for v in lyr.as_tuple()))
    return "\n".join(lines) + "\n"


def topology_layers(name_or_path) -> list:
    name = str(name_or_path)
    if name == "vgg16":
        return vgg16_layers()
    if name == "alexnet":
        return alexnet_layers()
    return load_layer_file(name_or_path)


# --- tensor helpers ------------------------------------------------------

ACT_MIN, ACT_MAX = -128, 127


def check_activation_range(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.int64)
    if arr.size and (arr.min() < ACT_MIN or arr.max() > ACT_MAX):
        raise ValueError("activation values exceed signed 8-bit range")
    return arr


def random_ifmaps(layer: LayerConfig, seed: int):
    """Per-channel H x W int64 tensors over the full signed 8-bit range."""
    rng = np.random.default_rng(seed)
    return [rng.integers(ACT_MIN, ACT_MAX + 1,
                         size=(layer.height, layer.width)).astype(np.int64)
            for _ in range(layer.in_channels)]


def random_filters(layer: LayerConfig, seed: int):
    """filters[f][c] is a K x K int64 kernel over the signed 8-bit range."""
    rng = np.random.default_rng(seed + 1)
    k = layer.kernel_size
    return [[rng.integers(ACT_MIN, ACT_MAX + 1, size=(k, k)).astype(np.int64)
             for _ in range(layer.in_channels)]
            for _ in range(layer.num_filters)]
