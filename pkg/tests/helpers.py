"""Shared helpers for the test modules."""
import numpy as np

from triconv.workload import (
    LayerConfig, ArchConfig, random_ifmaps, random_filters,
)
from triconv.golden import conv_layer
from triconv.orchestrator import run_layer


def run_pair(layer, arch, seed=0, **kw):
    """Run the simulator and the reference conv on the same random tensors."""
    ifm = random_ifmaps(layer, seed=seed)
    flt = random_filters(layer, seed=seed)
    res = run_layer(layer, arch, ifm, flt, **kw)
    gold = conv_layer(layer, ifm, flt)
    return res, gold


def arange_image(h, w):
    """1..h*w row major, handy for traceable single-channel runs."""
    return np.arange(1, h * w + 1, dtype=np.int64).reshape(1, h, w)


def ones_filter(k):
    return np.ones((1, 1, k, k), dtype=np.int64)


SMALL_ARCH = ArchConfig(cores=1, slices_per_core=1)
FULL_ARCH = ArchConfig(cores=8, slices_per_core=8)
