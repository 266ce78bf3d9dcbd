"""Input recycling buffer for one core.

Activations leaving the left edge of PE rows 1..k-1 are queued in k-1
shift-register FIFOs and handed back to the row above at the next output
row: a window-start restore returns the k oldest entries in one cycle, and
later single-entry emits continue the row diagonally.  One FIFO never needs
to hold more than width - k - 1 values, which is the depth configure()
provisions.

The last k-1 activations of each input row never reach the left edge before
the row is overwritten, so they cannot be queued.  They are instead captured
into a small shadow bank as they first enter the array from memory, keyed by
input row, and replayed for every later output row that needs them; a row's
registers are freed as soon as the top PE row moves past it.  At most k-1
input rows are live at once, so the bank never holds more than (k-1)^2
values.  With the shadow disabled the buffer models recycling alone:
emit_diagonal() returns NEED_MEMORY for those positions and the caller
fetches them from memory again.

The caller drives one feed operation per PE row per cycle (note_external,
note_external_row, restore_row, or emit_diagonal) and pushes left-edge exits
before the feed operations of the same cycle.  Pushes land in a staging slot
and join the FIFO at end_cycle(), but a same-cycle pop may consume the
staged value once the FIFO is drained, which a minimum-width row needs.
The buffer tracks each PE row's output-row and column position itself and
rejects out-of-protocol calls, so schedule bugs surface here instead of as
wrong numbers downstream.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import (
    IfmapTooNarrow,
    IfmapTooWide,
    ModeChangeMidLayer,
    NotConfigured,
    OutOfBounds,
    Underflow,
    WrongPhase,
)


class _NeedMemory:
    """Sentinel: this position must be re-fetched from external memory."""

    __slots__ = ()

    def __repr__(self):
        return "NEED_MEMORY"


NEED_MEMORY = _NeedMemory()


@dataclass(frozen=True)
class IRBState:
    """Snapshot of buffer contents and per-row stream positions."""

    shadow_enabled: bool
    width: int
    out_rows: int
    fifos: tuple
    staged: tuple
    shadow: tuple
    row_window: tuple
    row_pos: tuple


class RecyclingBuffer:
    def __init__(self, hw_kernel: int, capacity: int,
                 shadow_enabled: bool = True):
        if hw_kernel < 2:
            raise OutOfBounds("hw_kernel must be >= 2")
        if capacity < hw_kernel + 2:
            raise OutOfBounds("capacity must be >= hw_kernel + 2")
        self.k = hw_kernel
        self.capacity = capacity
        self.shadow_enabled = shadow_enabled
        self._configured = False
        self._active = False

    # --- layer setup -----------------------------------------------------

    def configure(self, width: int, out_rows: int):
        """Size the FIFOs for one streamed row width and reset all state."""
        k = self.k
        if width < k + 2:
            raise IfmapTooNarrow(f"width {width} below minimum {k + 2}")
        if width > self.capacity:
            raise IfmapTooWide(f"width {width} exceeds capacity "
                               f"{self.capacity}")
        if out_rows < 1:
            raise OutOfBounds("out_rows must be >= 1")
        self.width = width
        self.out_rows = out_rows
        self.out_cols = width - k + 1
        self.depth = width - k - 1
        self.fifos = [deque() for _ in range(k - 1)]
        self._staged = [None] * (k - 1)
        self.shadow = {}
        self.row_window = [0] * k
        self.row_pos = [0] * k
        self._configured = True
        self._active = False

    def set_mode(self, shadow_enabled: bool):
        if self._configured and self._active:
            raise ModeChangeMidLayer(
                "cannot toggle end-of-row reuse while a layer is streaming")
        self.shadow_enabled = shadow_enabled

    # --- per-cycle protocol ----------------------------------------------

    def push(self, pe_row: int, value: int) -> bool:
        """Stage a left-edge exit from pe_row (1..k-1) for the row above.

        Exits produced while the source row streams its final output row
        have no consumer and are dropped; returns whether the value was
        kept.  An exit arriving just after the row counter wrapped belongs
        to the window that ended, so the wrap is undone for the check.
        """
        self._check_ready()
        if not 1 <= pe_row < self.k:
            raise OutOfBounds(f"push source row {pe_row} out of 1..{self.k - 1}")
        w = self.row_window[pe_row]
        if self.row_pos[pe_row] == 0 and w > 0:
            w -= 1
        if w >= self.out_rows - 1:
            return False
        slot = pe_row - 1
        if self._staged[slot] is not None:
            raise WrongPhase(f"two pushes into queue {slot} in one cycle")
        self._staged[slot] = int(value)
        self._active = True
        return True

    def note_external_row(self, pe_row: int, values):
        """Record a window-start parallel load that came from memory."""
        self._check_feed(pe_row, want_start=True)
        if len(values) != self.k:
            raise WrongPhase(f"window start loads {self.k} values")
        if self.row_window[pe_row] > 0 and pe_row != self.k - 1:
            raise WrongPhase(
                f"row {pe_row} must restore from the buffer after row 0")
        self._maybe_capture_start(pe_row, values)
        self._advance(pe_row)

    def note_external(self, pe_row: int, value: int):
        """Record a single right-column entry that came from memory."""
        self._check_feed(pe_row, want_start=False)
        w = self.row_window[pe_row]
        if w > 0 and pe_row != self.k - 1 and self.shadow_enabled:
            raise WrongPhase(
                f"row {pe_row} is served by the buffer after row 0")
        col = self.row_pos[pe_row] + self.k - 1
        self._maybe_capture(pe_row, col, value)
        self._advance(pe_row)

    def restore_row(self, pe_row: int) -> list:
        """Return the k oldest queued values to restart pe_row's window."""
        self._check_feed(pe_row, want_start=True)
        if pe_row >= self.k - 1:
            raise WrongPhase("bottom row always loads from memory")
        if self.row_window[pe_row] == 0:
            raise WrongPhase("nothing to restore during the first output row")
        values = []
        for _ in range(self.k):
            values.append(self._pop(pe_row))
        self._advance(pe_row)
        self._active = True
        return values

    def emit_diagonal(self, pe_row: int):
        """Next recycled value for pe_row, or NEED_MEMORY when the position
        is an end-of-row activation and the shadow bank is disabled."""
        self._check_feed(pe_row, want_start=False)
        if pe_row >= self.k - 1:
            raise WrongPhase("bottom row always loads from memory")
        w = self.row_window[pe_row]
        if w == 0:
            raise WrongPhase("first output row streams from memory")
        col = self.row_pos[pe_row] + self.k - 1
        if col < self.out_cols:
            value = self._pop(pe_row)
        elif not self.shadow_enabled:
            value = NEED_MEMORY
        else:
            region_row = w + pe_row
            stored = self.shadow.get(region_row)
            idx = col - self.out_cols
            if stored is None or idx >= len(stored) or stored[idx] is None:
                raise Underflow(
                    f"input row {region_row} col {col} not in shadow bank")
            value = stored[idx]
        self._advance(pe_row)
        self._active = True
        return value

    def end_cycle(self):
        """Commit staged pushes.  Call once per cycle after all feeds."""
        self._check_ready()
        for slot in range(self.k - 1):
            value = self._staged[slot]
            if value is not None:
                self.fifos[slot].append(value)
                self._staged[slot] = None
                if len(self.fifos[slot]) > self.depth:
                    raise WrongPhase(
                        f"queue {slot} exceeded depth {self.depth}")
        total = sum(len(v) for v in self.shadow.values())
        if total > (self.k - 1) ** 2:
            raise WrongPhase("shadow bank exceeded (k-1)^2 values")

    def shadow_shift(self) -> int:
        """Drop shadow rows the top PE row has moved past; return how many."""
        self._check_ready()
        alive = self.row_window[0]
        dead = [row for row in self.shadow if row < alive]
        for row in dead:
            del self.shadow[row]
        return len(dead)

    # --- inspection ------------------------------------------------------

    def fifo_len(self, idx: int) -> int:
        staged = 0 if self._staged[idx] is None else 1
        return len(self.fifos[idx]) + staged

    def row_done(self, pe_row: int) -> bool:
        return self.row_window[pe_row] >= self.out_rows

    def state(self) -> IRBState:
        self._check_ready()
        return IRBState(
            shadow_enabled=self.shadow_enabled,
            width=self.width,
            out_rows=self.out_rows,
            fifos=tuple(tuple(f) for f in self.fifos),
            staged=tuple(self._staged),
            shadow=tuple(sorted((row, tuple(vals))
                                for row, vals in self.shadow.items())),
            row_window=tuple(self.row_window),
            row_pos=tuple(self.row_pos),
        )

    # --- internals -------------------------------------------------------

    def _check_ready(self):
        if not self._configured:
            raise NotConfigured("configure() must run before streaming")

    def _check_feed(self, pe_row: int, want_start: bool):
        self._check_ready()
        if not 0 <= pe_row < self.k:
            raise OutOfBounds(f"pe_row {pe_row} out of 0..{self.k - 1}")
        if self.row_window[pe_row] >= self.out_rows:
            raise WrongPhase(f"row {pe_row} already finished its stream")
        at_start = self.row_pos[pe_row] == 0
        if want_start != at_start:
            raise WrongPhase(
                f"row {pe_row} at column offset {self.row_pos[pe_row]}, "
                f"{'window start' if want_start else 'mid window'} expected")

    def _pop(self, pe_row: int):
        fifo = self.fifos[pe_row]
        if fifo:
            return fifo.popleft()
        staged = self._staged[pe_row]
        if staged is not None:
            self._staged[pe_row] = None
            return staged
        raise Underflow(f"queue {pe_row} empty")

    def _maybe_capture_start(self, pe_row: int, values):
        w = self.row_window[pe_row]
        if (not self.shadow_enabled or pe_row == 0
                or w >= self.out_rows - 1):
            self._active = True
            return
        for col in range(self.k):
            if col >= self.out_cols:
                self._store_shadow(w + pe_row, col, values[col])
        self._active = True

    def _maybe_capture(self, pe_row: int, col: int, value: int):
        w = self.row_window[pe_row]
        if (self.shadow_enabled and pe_row > 0 and w < self.out_rows - 1
                and col >= self.out_cols):
            self._store_shadow(w + pe_row, col, value)
        self._active = True

    def _store_shadow(self, region_row: int, col: int, value: int):
        stored = self.shadow.setdefault(region_row,
                                        [None] * (self.k - 1))
        stored[col - self.out_cols] = int(value)

    def _advance(self, pe_row: int):
        self.row_pos[pe_row] += 1
        if self.row_pos[pe_row] == self.out_cols:
            self.row_pos[pe_row] = 0
            self.row_window[pe_row] += 1
            if pe_row == 0:
                alive = self.row_window[0]
                for row in [r for r in self.shadow if r < alive]:
                    del self.shadow[row]
