"""External memory model and traffic accounting.

Every off-array access flows through here: ifmap reads (with a per-stream
fetch bitmap so re-reads are detectable), weight loads, partial-sum spills,
and output writes.  Zero-padding halo reads and reads past the streamed
region return zero and are never counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBounds, ShapeMismatch
from .workload import LayerConfig, tile_real_mask

CONVENTIONS = ("ifmap", "ifmap+w", "all")


@dataclass
class AccessCounters:
    ifmap_reads: int = 0
    ifmap_rereads: int = 0
    weight_reads: int = 0
    ofmap_writes: int = 0
    psum_reads: int = 0
    psum_writes: int = 0

    def traffic(self, convention: str = "ifmap") -> int:
        """Total accesses under a counting convention.

        ifmap    counts input fetches only
        ifmap+w  adds weight loads
        all      adds output writes and partial-sum spill traffic
        """
        if convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {convention!r}")
        total = self.ifmap_reads
        if convention in ("ifmap+w", "all"):
            total += self.weight_reads
        if convention == "all":
            total += self.ofmap_writes + self.psum_reads + self.psum_writes
        return total

    def as_dict(self) -> dict:
        return {
            "ifmap_reads": self.ifmap_reads,
            "ifmap_rereads": self.ifmap_rereads,
            "weight_reads": self.weight_reads,
            "ofmap_writes": self.ofmap_writes,
            "psum_reads": self.psum_reads,
            "psum_writes": self.psum_writes,
        }

    def __add__(self, other: "AccessCounters") -> "AccessCounters":
        return AccessCounters(*(a + b for a, b in
                                zip(self._fields(), other._fields())))

    def _fields(self):
        return (self.ifmap_reads, self.ifmap_rereads, self.weight_reads,
                self.ofmap_writes, self.psum_reads, self.psum_writes)


class IfmapStream:
    """Read port over one shifted region of a padded input channel.

    Coordinates passed to read() are region-local.  The stream keeps a fetch
    count per real (unpadded) address so callers can check that recycling
    kept every address to a single external fetch, or measure the re-read
    tail when end-of-row reuse is disabled.
    """

    def __init__(self, image: np.ndarray, padding: int, row_off: int,
                 col_off: int, region_h: int, region_w: int,
                 counters: AccessCounters):
        image = np.asarray(image, dtype=np.int64)
        if image.ndim != 2:
            raise ShapeMismatch("channel image must be 2-D")
        self.image = image
        self.padding = padding
        self.row_off = row_off
        self.col_off = col_off
        self.region_h = region_h
        self.region_w = region_w
        self.counters = counters
        self.fetch_counts = np.zeros(image.shape, dtype=np.int32)

    def read(self, r: int, c: int) -> int:
        if not (0 <= r < self.region_h and 0 <= c < self.region_w):
            raise OutOfBounds(f"region read ({r}, {c}) outside "
                              f"{self.region_h} x {self.region_w}")
        real_r = self.row_off + r - self.padding
        real_c = self.col_off + c - self.padding
        h, w = self.image.shape
        if not (0 <= real_r < h and 0 <= real_c < w):
            return 0
        self.counters.ifmap_reads += 1
        self.fetch_counts[real_r, real_c] += 1
        if self.fetch_counts[real_r, real_c] > 1:
            self.counters.ifmap_rereads += 1
        return int(self.image[real_r, real_c])

    def covered_counts(self) -> np.ndarray:
        """Fetch counts restricted to real addresses the region can touch."""
        h, w = self.image.shape
        r0 = max(0, self.row_off - self.padding)
        r1 = min(h, self.row_off + self.region_h - self.padding)
        c0 = max(0, self.col_off - self.padding)
        c1 = min(w, self.col_off + self.region_w - self.padding)
        if r1 <= r0 or c1 <= c0:
            return np.zeros((0, 0), dtype=np.int32)
        return self.fetch_counts[r0:r1, c0:c1]


class WeightStore:
    """Filter bank source.  Counts one read per real kernel position fetched;
    zero positions added by tiling padding are free."""

    def __init__(self, layer: LayerConfig, filters, counters: AccessCounters):
        self.layer = layer
        self.filters = filters
        self.counters = counters

    def fetch_tile(self, filter_idx: int, channel_idx: int, row_off: int,
                   col_off: int, hw_kernel: int) -> np.ndarray:
        if not 0 <= filter_idx < self.layer.num_filters:
            raise OutOfBounds(f"filter index {filter_idx}")
        if not 0 <= channel_idx < self.layer.in_channels:
            raise OutOfBounds(f"channel index {channel_idx}")
        kernel = np.asarray(self.filters[filter_idx][channel_idx],
                            dtype=np.int64)
        k = self.layer.kernel_size
        if kernel.shape != (k, k):
            raise ShapeMismatch(
                f"kernel shape {kernel.shape}, expected ({k}, {k})")
        tile = np.zeros((hw_kernel, hw_kernel), dtype=np.int64)
        mask = tile_real_mask(k, hw_kernel, row_off, col_off)
        for i in range(hw_kernel):
            for j in range(hw_kernel):
                if mask[i, j]:
                    tile[i, j] = kernel[row_off + i, col_off + j]
        self.counters.weight_reads += int(mask.sum())
        return tile


class OutputStore:
    """Accumulates per-filter output planes across array passes.

    A filter's plane may be built up over several accumulation passes
    (channel groups times kernel-tile rounds).  Spill accounting charges a
    partial-sum write on every non-final pass, a partial-sum read on every
    non-first pass, and one output write per element on the final pass.
    count_spill=False keeps only the final output writes.
    """

    def __init__(self, layer: LayerConfig, counters: AccessCounters,
                 count_spill: bool = True):
        self.layer = layer
        self.counters = counters
        self.count_spill = count_spill
        shape = (layer.num_filters, layer.out_height, layer.out_width)
        self.planes = np.zeros(shape, dtype=np.int64)
        self.commit_counts = np.zeros(shape, dtype=np.int32)
        self._first = True
        self._last = True

    def begin_pass(self, is_first_accum: bool, is_last_accum: bool):
        self._first = is_first_accum
        self._last = is_last_accum

    def commit_block(self, filter_indices, w: int, x: int, values):
        """One output position for a group of slices, current pass."""
        if not (0 <= w < self.layer.out_height
                and 0 <= x < self.layer.out_width):
            raise OutOfBounds(f"output position ({w}, {x})")
        values = np.asarray(values, dtype=np.int64)
        if values.shape != (len(filter_indices),):
            raise ShapeMismatch("one value per filter index required")
        idx = np.asarray(filter_indices, dtype=np.intp)
        self.planes[idx, w, x] += values
        self.commit_counts[idx, w, x] += 1
        n = len(filter_indices)
        if self._last:
            self.counters.ofmap_writes += n
        if self.count_spill:
            if not self._last:
                self.counters.psum_writes += n
            if not self._first:
                self.counters.psum_reads += n

    def finalize(self, expected_commits_per_filter) -> np.ndarray:
        """Check every element saw every accumulation pass, return planes."""
        expected = np.asarray(expected_commits_per_filter, dtype=np.int32)
        want = expected[:, None, None]
        if not np.array_equal(self.commit_counts,
                              np.broadcast_to(want, self.commit_counts.shape)):
            raise OutOfBounds("output elements missed accumulation passes")
        return self.planes
