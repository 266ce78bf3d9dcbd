"""Weight-stationary processing-element grids.

One slice is a k x k PE grid.  Activations enter the right column and shift
left one PE per cycle (a whole row can instead be loaded in parallel at a
window start).  Each PE multiplies its held weight by the activation it saw
last cycle, and partial sums ripple down each column one row per cycle, so a
product registered at row r reaches the bottom after k - 1 - r more hops.
The column sums leave through an adder tree.

All register updates are two-phase: every new value is computed from last
cycle's state.  With int8 activations and weights a 3x3 slice fits int32
partial sums; int64 is used throughout so the model never wraps first.

SliceBank is the fast path: all slices of one core share a single activation
plane, so activations are stored once and the per-cycle work is a handful of
small vectorized operations.  Slice is an independent scalar implementation
of the same rules kept for unit tests and inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatch, ShapeMismatch


@dataclass
class PEState:
    """Registers of one processing element."""

    act: int
    weight: int
    prod: int
    psum: int


def adder_tree_sum(values) -> int:
    """Combinational sum of column outputs (or of per-core slice outputs)."""
    return int(np.asarray(values, dtype=np.int64).sum())


class SliceBank:
    """All output slices of one core, sharing one activation plane.

    step() advances every slice one cycle and returns the adder-tree output
    of each slice for the new cycle.
    """

    def __init__(self, num_slices: int, k: int):
        self.n = num_slices
        self.k = k
        self.A = np.zeros((k, k), dtype=np.int64)
        self._A2 = np.zeros((k, k), dtype=np.int64)
        self.W = np.zeros((num_slices, k, k), dtype=np.int64)
        self.prod = np.zeros((num_slices, k, k), dtype=np.int64)
        self._prod2 = np.zeros((num_slices, k, k), dtype=np.int64)
        self.psum = np.zeros((num_slices, k, k), dtype=np.int64)
        self._psum2 = np.zeros((num_slices, k, k), dtype=np.int64)

    def reset_state(self):
        for arr in (self.A, self._A2, self.W, self.prod, self._prod2,
                    self.psum, self._psum2):
            arr.fill(0)

    def load_weights(self, slice_idx: int, tile):
        tile = np.asarray(tile, dtype=np.int64)
        if tile.shape != (self.k, self.k):
            raise ShapeMismatch(
                f"weight tile shape {tile.shape}, expected {(self.k, self.k)}")
        self.W[slice_idx] = tile

    def left_exits(self) -> np.ndarray:
        """Activations leaving column 0 on the next step (current state)."""
        return self.A[:, 0].copy()

    def step(self, feeds, set_rows=None) -> np.ndarray:
        """One cycle.

        feeds: length-k vector entering the right column, one value per row.
        set_rows: {row: length-k values} rows parallel-loaded this cycle
        instead of shifting (their feeds entry is ignored).
        Returns the new adder-tree output per slice.
        """
        feeds = np.asarray(feeds, dtype=np.int64)
        if feeds.shape != (self.k,):
            raise ArityMismatch(f"need {self.k} feeds, got shape {feeds.shape}")
        # products registered this cycle use last cycle's activations
        np.multiply(self.W, self.A[None, :, :], out=self._prod2)
        p2 = self._psum2
        p2[:, 0, :] = self.prod[:, 0, :]
        np.add(self.prod[:, 1:, :], self.psum[:, :-1, :], out=p2[:, 1:, :])
        a2 = self._A2
        a2[:, :-1] = self.A[:, 1:]
        a2[:, -1] = feeds
        if set_rows:
            for row, values in set_rows.items():
                values = np.asarray(values, dtype=np.int64)
                if values.shape != (self.k,):
                    raise ArityMismatch(
                        f"row load needs {self.k} values, "
                        f"got shape {values.shape}")
                a2[row, :] = values
        self.A, self._A2 = a2, self.A
        self.prod, self._prod2 = self._prod2, self.prod
        self.psum, self._psum2 = p2, self.psum
        return self.psum[:, -1, :].sum(axis=1)


class Slice:
    """One PE grid, scalar registers, same update rules as SliceBank.

    Kept deliberately plain so the dataflow can be read off directly and the
    vectorized bank has an in-repo cross-check.
    """

    def __init__(self, k: int):
        self.k = k
        self.act = [[0] * k for _ in range(k)]
        self.weight = [[0] * k for _ in range(k)]
        self.prod = [[0] * k for _ in range(k)]
        self.psum = [[0] * k for _ in range(k)]

    def load_weights(self, kernel):
        kernel = np.asarray(kernel, dtype=np.int64)
        if kernel.shape != (self.k, self.k):
            raise ShapeMismatch(
                f"kernel shape {kernel.shape}, expected {(self.k, self.k)}")
        self.weight = [[int(v) for v in row] for row in kernel]

    def pe(self, r: int, c: int) -> PEState:
        return PEState(act=self.act[r][c], weight=self.weight[r][c],
                       prod=self.prod[r][c], psum=self.psum[r][c])

    def left_exits(self):
        return [row[0] for row in self.act]

    def step(self, feeds, set_rows=None) -> int:
        k = self.k
        if len(feeds) != k:
            raise ArityMismatch(f"need {k} feeds, got {len(feeds)}")
        new_prod = [[self.weight[r][c] * self.act[r][c] for c in range(k)]
                    for r in range(k)]
        new_psum = [[self.prod[r][c] + (self.psum[r - 1][c] if r else 0)
                     for c in range(k)] for r in range(k)]
        new_act = [[self.act[r][c + 1] if c < k - 1 else int(feeds[r])
                    for c in range(k)] for r in range(k)]
        if set_rows:
            for row, values in set_rows.items():
                if len(values) != k:
                    raise ArityMismatch(
                        f"row load needs {k} values, got {len(values)}")
                new_act[row] = [int(v) for v in values]
        self.act, self.prod, self.psum = new_act, new_prod, new_psum
        return sum(self.psum[k - 1][c] for c in range(k))
