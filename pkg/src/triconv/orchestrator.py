"""Array-level sequencing.

Runs a convolution layer on the core/slice grid as a series of lockstep
passes.  Within a pass every active core streams one shifted region of one
input channel through its PE grid on the same clock: PE row r runs r cycles
behind row 0, a window start loads a full row in one cycle (from memory for
the first output row and the bottom row, from the recycling buffer above),
and every other cycle feeds one activation into the right column.  This
skewed schedule keeps a new window finishing every cycle with no stalls
between output rows.

Cycle layout of one pass, 0-indexed:
    0 .. k-1                      weight rows load, stream idle
    k + r                         PE row r's first window loads in parallel
    2k + 1 + i                    output i (row-major) leaves the adder tree
    out_rows*out_cols + 2k        last output, final cycle of the pass

Cross-core adder trees sum the per-slice outputs of all cores each cycle, so
channel groups and kernel sub-tiles accumulate in the array; serialized
channel groups and tile rounds accumulate through the partial-sum store
instead.

After every pass the orchestrator checks the stream invariants: recycling
queues drained, every PE row finished its stream, and each fetch bitmap
matching the expected pattern (every covered address exactly once when the
shadow bank is on; re-reads confined to the last k-1 columns when off).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ChannelCountMismatch,
    IfmapTooNarrow,
    LaneDesync,
    ShapeMismatch,
    WrongPhase,
)
from .memory import AccessCounters, IfmapStream, OutputStore, WeightStore
from .recycling import NEED_MEMORY, RecyclingBuffer
from .slice_engine import SliceBank
from .trace import (
    SimTrace,
    TraceRecord,
    TAG_EXTERNAL,
    TAG_HORIZONTAL,
    TAG_QUEUE,
    TAG_SHADOW,
    TAG_UNSET,
)
from .workload import ArchConfig, LayerConfig, TilingPlan, plan_tiling


class Phase(Enum):
    IDLE = "Idle"
    WEIGHT_LOAD = "WeightLoad"
    FILL = "Fill"
    STEADY = "Steady"
    ROW_TRANSITION = "RowTransition"
    DRAIN = "Drain"


def pass_cycles(out_rows: int, out_cols: int, k: int) -> int:
    """Cycles for one pass: one output per cycle plus fixed overhead for
    weight load, array fill, and the last column's drain."""
    return out_rows * out_cols + 2 * k + 1


def phase_at(t: int, k: int, out_rows: int, out_cols: int) -> Phase:
    if t < k:
        return Phase.WEIGHT_LOAD
    s = t - k
    if s < k:
        return Phase.FILL
    if s >= out_rows * out_cols:
        return Phase.DRAIN
    if s >= out_cols and s % out_cols < k:
        return Phase.ROW_TRANSITION
    return Phase.STEADY


def expected_fetch_counts(region_h: int, region_w: int, k: int,
                          out_rows: int, out_cols: int,
                          shadow_enabled: bool) -> np.ndarray:
    """Per-position external fetch counts one stream should produce.

    With the shadow bank on, one fetch everywhere.  Off, the last k-1
    columns of input row p are fetched again for every later output row
    that replays them: rows max(1, p-k+2) .. min(p, out_rows-1).
    """
    counts = np.ones((region_h, region_w), dtype=np.int32)
    if shadow_enabled:
        return counts
    for p in range(region_h):
        extra = min(p, out_rows - 1) - max(1, p - k + 2) + 1
        if extra > 0:
            counts[p, out_cols:] += extra
    return counts


@dataclass(frozen=True)
class CoreAssignment:
    """One core's job within a pass: a channel and a kernel sub-tile."""

    core: int
    channel: int
    tile_index: int
    row_off: int
    col_off: int


@dataclass(frozen=True)
class PassSpec:
    index: int
    filter_group: int
    channel_group: int
    tile_round: int
    filter_indices: tuple
    assignments: tuple
    first_accum: bool
    last_accum: bool


def build_pass_schedule(layer: LayerConfig, arch: ArchConfig,
                        plan: TilingPlan) -> list:
    """Serialize the layer into filter-major lockstep passes."""
    q = plan.cores_per_channel
    chans_per_group = arch.cores // q
    specs = []
    index = 0
    for fg in range(plan.filter_groups):
        f_lo = fg * arch.slices_per_core
        f_hi = min(layer.num_filters, f_lo + arch.slices_per_core)
        filters = tuple(range(f_lo, f_hi))
        for cg in range(plan.channel_groups):
            for tr in range(plan.tile_rounds):
                assignments = []
                for lc in range(chans_per_group):
                    channel = cg * chans_per_group + lc
                    if channel >= layer.in_channels:
                        continue
                    for j in range(q):
                        tile = tr * q + j
                        if tile >= plan.kernel_tiles:
                            continue
                        row_off, col_off = plan.sub_kernel_map[tile]
                        assignments.append(CoreAssignment(
                            core=lc * q + j, channel=channel,
                            tile_index=tile, row_off=row_off,
                            col_off=col_off))
                if not assignments:
                    raise LaneDesync(
                        f"pass fg={fg} cg={cg} tr={tr} has no work")
                specs.append(PassSpec(
                    index=index, filter_group=fg, channel_group=cg,
                    tile_round=tr, filter_indices=filters,
                    assignments=tuple(assignments),
                    first_accum=(cg == 0 and tr == 0),
                    last_accum=(cg == plan.channel_groups - 1
                                and tr == plan.tile_rounds - 1)))
                index += 1
    return specs


@dataclass
class SimResult:
    layer: LayerConfig
    arch: ArchConfig
    plan: TilingPlan
    ofmaps: np.ndarray
    counters: AccessCounters
    cycles: int
    passes: int
    shadow_enabled: bool
    count_spill: bool = True
    trace: SimTrace | None = None
    fetch_maps: list | None = None


class _ActiveCore:
    """Per-pass streaming state of one core."""

    def __init__(self, assign: CoreAssignment, bank: SliceBank,
                 irb: RecyclingBuffer, stream: IfmapStream, k: int,
                 out_rows: int, out_cols: int, tracing: bool):
        self.assign = assign
        self.bank = bank
        self.irb = irb
        self.stream = stream
        self.k = k
        self.out_rows = out_rows
        self.out_cols = out_cols
        self.n_stream = out_rows * out_cols
        self.tracing = tracing
        self.events = []
        if tracing:
            self.tags = [[TAG_UNSET] * k for _ in range(k)]

    def stage_pushes(self, t: int):
        """Queue this cycle's left-edge exits before any feeds run."""
        k = self.k
        exits = None
        for r in range(1, k):
            s = t - k - r
            if 1 <= s <= self.n_stream:
                if exits is None:
                    exits = self.bank.left_exits()
                kept = self.irb.push(r, int(exits[r]))
                if kept and self.tracing:
                    self.events.append(("push", r - 1, int(exits[r])))

    def feed_and_step(self, t: int) -> np.ndarray:
        k = self.k
        feeds = np.zeros(k, dtype=np.int64)
        set_rows = {}
        new_tags = None
        if self.tracing:
            new_tags = [[TAG_HORIZONTAL if self.tags[r][c + 1] != TAG_UNSET
                         else TAG_UNSET for c in range(k - 1)] + [TAG_UNSET]
                        for r in range(k)]
        for r in range(k):
            s = t - k - r
            if s < 0 or s >= self.n_stream:
                continue
            w, x = divmod(s, self.out_cols)
            region_row = w + r
            if x == 0:
                if w == 0 or r == k - 1:
                    values = [self.stream.read(region_row, c)
                              for c in range(k)]
                    self.irb.note_external_row(r, values)
                    tag = TAG_EXTERNAL
                    if self.tracing:
                        self.events.append(
                            ("external_row", r, region_row, tuple(values)))
                else:
                    values = self.irb.restore_row(r)
                    tag = TAG_QUEUE
                    if self.tracing:
                        self.events.append(("restore", r, tuple(values)))
                set_rows[r] = values
                if self.tracing:
                    new_tags[r] = [tag] * k
                continue
            col = x + k - 1
            if w == 0 or r == k - 1:
                value = self.stream.read(region_row, col)
                self.irb.note_external(r, value)
                if self.tracing:
                    self.events.append(
                        ("external", r, region_row, col, value))
                    if (self.irb.shadow_enabled and r > 0
                            and w < self.out_rows - 1
                            and col >= self.out_cols):
                        self.events.append(
                            ("capture", region_row, col, value))
                    new_tags[r][k - 1] = TAG_EXTERNAL
            else:
                value = self.irb.emit_diagonal(r)
                if value is NEED_MEMORY:
                    value = self.stream.read(region_row, col)
                    if self.tracing:
                        self.events.append(
                            ("refetch", r, region_row, col, value))
                        new_tags[r][k - 1] = TAG_EXTERNAL
                elif col < self.out_cols:
                    if self.tracing:
                        self.events.append(("emit_fifo", r, col, value))
                        new_tags[r][k - 1] = TAG_QUEUE
                else:
                    if self.tracing:
                        self.events.append(
                            ("emit_shadow", r, region_row, col, value))
                        new_tags[r][k - 1] = TAG_SHADOW
            feeds[r] = value
        trees = self.bank.step(feeds, set_rows if set_rows else None)
        if self.tracing:
            self.tags = new_tags
        return trees

    def check_pass_end(self, shadow_enabled: bool):
        for r in range(self.k):
            if not self.irb.row_done(r):
                raise LaneDesync(
                    f"core {self.assign.core} row {r} did not finish "
                    f"its stream")
        for i in range(self.k - 1):
            if self.irb.fifo_len(i) != 0:
                raise LaneDesync(
                    f"core {self.assign.core} queue {i} not drained at "
                    f"pass end")
        region = self._region_counts()
        expect = expected_fetch_counts(
            region.shape[0], region.shape[1], self.k, self.out_rows,
            self.out_cols, shadow_enabled)
        box = self._real_box()
        if box is None:
            return
        r0, r1, c0, c1 = box
        if not np.array_equal(region[r0:r1, c0:c1],
                              expect[r0:r1, c0:c1]):
            raise LaneDesync(
                f"core {self.assign.core} fetch pattern off the expected "
                f"per-address counts")

    def _real_box(self):
        """Region-coordinate box that maps onto real addresses."""
        st = self.stream
        h, w = st.image.shape
        r0 = max(0, st.padding - st.row_off)
        r1 = min(st.region_h, h + st.padding - st.row_off)
        c0 = max(0, st.padding - st.col_off)
        c1 = min(st.region_w, w + st.padding - st.col_off)
        if r1 <= r0 or c1 <= c0:
            return None
        return r0, r1, c0, c1

    def _region_counts(self) -> np.ndarray:
        st = self.stream
        counts = np.zeros((st.region_h, st.region_w), dtype=np.int32)
        box = self._real_box()
        if box is not None:
            r0, r1, c0, c1 = box
            counts[r0:r1, c0:c1] = st.fetch_counts[
                st.row_off + r0 - st.padding:st.row_off + r1 - st.padding,
                st.col_off + c0 - st.padding:st.col_off + c1 - st.padding]
        return counts

    def take_record(self, pass_index: int, t: int, phase: Phase,
                    extra_events) -> TraceRecord:
        events = tuple(self.events) + tuple(extra_events)
        self.events = []
        return TraceRecord(
            pass_index=pass_index,
            cycle=t,
            stream_cycle=t - self.k + 1,
            phase=phase.value,
            core=self.assign.core,
            acts=tuple(tuple(int(v) for v in row) for row in self.bank.A),
            tags=tuple(tuple(row) for row in self.tags),
            fifo_lens=tuple(self.irb.fifo_len(i)
                            for i in range(self.k - 1)),
            shadow=self.irb.state().shadow,
            tree=tuple(int(v) for v in self.bank.psum[:, -1, :].sum(axis=1)),
            events=events)


class Array:
    """The full accelerator: cores, slices, recycling buffers, sequencing."""

    def __init__(self, arch: ArchConfig):
        self.arch = arch
        self.banks = [SliceBank(arch.slices_per_core, arch.hw_kernel)
                      for _ in range(arch.cores)]
        self.irbs = [RecyclingBuffer(arch.hw_kernel, arch.buffer_capacity,
                                     arch.shadow_enabled)
                     for _ in range(arch.cores)]
        self._running = False
        self._result = None

    # --- layer control ---------------------------------------------------

    def begin_layer(self, layer: LayerConfig, ifmaps, filters,
                    count_spill: bool = True, trace: SimTrace | None = None,
                    keep_fetch_maps: bool = False):
        arch = self.arch
        k = arch.hw_kernel
        if len(ifmaps) != layer.in_channels:
            raise ChannelCountMismatch(
                f"expected {layer.in_channels} input channels, "
                f"got {len(ifmaps)}")
        if len(filters) != layer.num_filters:
            raise ChannelCountMismatch(
                f"expected {layer.num_filters} filter banks, "
                f"got {len(filters)}")
        self._ifmaps = []
        for ch in ifmaps:
            ch = np.asarray(ch, dtype=np.int64)
            if ch.shape != (layer.height, layer.width):
                raise ShapeMismatch(
                    f"channel shape {ch.shape}, expected "
                    f"{(layer.height, layer.width)}")
            self._ifmaps.append(ch)
        self.layer = layer
        self.plan = plan_tiling(layer, arch, simulator=True)
        self.out_rows = layer.out_height
        self.out_cols = layer.out_width
        self.region_h = self.out_rows + k - 1
        self.region_w = self.out_cols + k - 1
        if self.region_w < 2 * k:
            raise IfmapTooNarrow(
                f"streamed width {self.region_w} under the stall-free "
                f"minimum {2 * k}; pad the input or use a wider layer")
        self.counters = AccessCounters()
        self.count_spill = count_spill
        self.weights = WeightStore(layer, filters, self.counters)
        self.out_store = OutputStore(layer, self.counters, count_spill)
        self.schedule = build_pass_schedule(layer, arch, self.plan)
        self.t_pass = pass_cycles(self.out_rows, self.out_cols, k)
        self.trace = trace
        self.keep_fetch_maps = keep_fetch_maps
        self.fetch_maps = [] if keep_fetch_maps else None
        self._pass_pos = 0
        self._t = 0
        self._global = 0
        self._active = None
        self._running = True
        self._result = None
        self._begin_pass()

    @property
    def phase(self) -> Phase:
        if not self._running:
            return Phase.IDLE
        return phase_at(self._t, self.arch.hw_kernel, self.out_rows,
                        self.out_cols)

    def _begin_pass(self):
        spec = self.schedule[self._pass_pos]
        k = self.arch.hw_kernel
        self.out_store.begin_pass(spec.first_accum, spec.last_accum)
        tracing = self.trace is not None
        active = []
        for assign in spec.assignments:
            bank = self.banks[assign.core]
            bank.reset_state()
            for local, f in enumerate(spec.filter_indices):
                tile = self.weights.fetch_tile(f, assign.channel,
                                               assign.row_off,
                                               assign.col_off, k)
                bank.load_weights(local, tile)
            irb = self.irbs[assign.core]
            irb.configure(self.region_w, self.out_rows)
            irb.set_mode(self.arch.shadow_enabled)
            stream = IfmapStream(self._ifmaps[assign.channel],
                                 self.layer.padding, assign.row_off,
                                 assign.col_off, self.region_h,
                                 self.region_w, self.counters)
            active.append(_ActiveCore(assign, bank, irb, stream, k,
                                      self.out_rows, self.out_cols,
                                      tracing))
        self._active = active
        self._spec = spec
        self._t = 0

    def step_cycle(self) -> Phase:
        """Advance the whole array one clock.  Returns the phase stepped."""
        if not self._running:
            raise WrongPhase("no layer in progress")
        t = self._t
        k = self.arch.hw_kernel
        phase = self.phase
        for core in self._active:
            core.stage_pushes(t)
        trees_total = None
        for core in self._active:
            trees = core.feed_and_step(t)
            trees_total = trees if trees_total is None \
                else trees_total + trees
        commit_events = []
        q = t - (2 * k + 1)
        if 0 <= q < self.out_rows * self.out_cols:
            w, x = divmod(q, self.out_cols)
            n = len(self._spec.filter_indices)
            values = trees_total[:n]
            self.out_store.commit_block(self._spec.filter_indices, w, x,
                                        values)
            if self.trace is not None:
                commit_events.append(
                    ("commit", w, x, tuple(int(v) for v in values)))
        for core in self._active:
            core.irb.end_cycle()
        if self.trace is not None and self.trace.wants(self._global):
            for i, core in enumerate(self._active):
                extra = commit_events if i == 0 else ()
                self.trace.add(core.take_record(self._spec.index, t, phase,
                                                extra))
        elif self.trace is not None:
            for core in self._active:
                core.events = []
        self._t += 1
        self._global += 1
        if self._t == self.t_pass:
            self._end_pass()
        return phase

    def _end_pass(self):
        for core in self._active:
            core.check_pass_end(self.arch.shadow_enabled)
            if self.keep_fetch_maps:
                self.fetch_maps.append({
                    "pass": self._spec.index,
                    "core": core.assign.core,
                    "channel": core.assign.channel,
                    "tile": core.assign.tile_index,
                    "counts": core._region_counts(),
                })
        self._pass_pos += 1
        if self._pass_pos == len(self.schedule):
            self._finish()
        else:
            self._begin_pass()

    def _finish(self):
        commits = self.plan.channel_groups * self.plan.tile_rounds
        expected = np.full(self.layer.num_filters, commits, dtype=np.int32)
        ofmaps = self.out_store.finalize(expected)
        self._result = SimResult(
            layer=self.layer, arch=self.arch, plan=self.plan,
            ofmaps=ofmaps, counters=self.counters,
            cycles=len(self.schedule) * self.t_pass,
            passes=len(self.schedule),
            shadow_enabled=self.arch.shadow_enabled,
            count_spill=self.count_spill,
            trace=self.trace, fetch_maps=self.fetch_maps)
        self._running = False

    def run_to_end(self) -> SimResult:
        while self._running:
            self.step_cycle()
        return self._result

    def result(self) -> SimResult:
        if self._result is None:
            raise WrongPhase("layer still in progress")
        return self._result


def run_layer(layer: LayerConfig, arch: ArchConfig, ifmaps, filters,
              count_spill: bool = True, trace: SimTrace | None = None,
              keep_fetch_maps: bool = False) -> SimResult:
    """Build an array, run one layer to completion, return the result."""
    array = Array(arch)
    array.begin_layer(layer, ifmaps, filters, count_spill=count_spill,
                      trace=trace, keep_fetch_maps=keep_fetch_maps)
    return array.run_to_end()
