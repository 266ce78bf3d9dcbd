import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triconv.errors import (
    IfmapTooNarrow,
    IfmapTooWide,
    ModeChangeMidLayer,
    NotConfigured,
    OutOfBounds,
    Underflow,
    WrongPhase,
)
from triconv.recycling import NEED_MEMORY, RecyclingBuffer


def drive_region(buf, region):
    """Stream a full region through the buffer with the skewed schedule.

    Each PE row is modeled as a k-register delay line so left-edge exits can
    be pushed.  Every value the buffer hands back (restores, queue emits,
    shadow emits) is checked against the region, which makes this the
    ground-truth protocol exercise.  Returns per-queue push bookkeeping,
    observed queue peaks, and the number of NEED_MEMORY refetches.
    """
    k = buf.k
    rows, width = region.shape
    oc = width - k + 1
    out_rows = rows - k + 1
    buf.configure(width, out_rows)
    n_stream = out_rows * oc
    lines = [[0] * k for _ in range(k)]
    kept = [0] * (k - 1)
    dropped = [0] * (k - 1)
    peak = [0] * (k - 1)
    refetches = 0
    # the last feed is at t = n_stream + k - 2, the last push one cycle later
    for t in range(n_stream + k):
        for r in range(1, k):
            if 1 <= t - r <= n_stream:
                if buf.push(r, lines[r][0]):
                    kept[r - 1] += 1
                else:
                    dropped[r - 1] += 1
        for r in range(k):
            s = t - r
            if not 0 <= s < n_stream:
                continue
            w, x = divmod(s, oc)
            rr = w + r
            if x == 0:
                if w == 0 or r == k - 1:
                    vals = [int(v) for v in region[rr, :k]]
                    buf.note_external_row(r, vals)
                else:
                    vals = buf.restore_row(r)
                    assert vals == [int(v) for v in region[rr, :k]], \
                        (r, w, vals)
                lines[r] = list(vals)
            else:
                col = x + k - 1
                if w == 0 or r == k - 1:
                    v = int(region[rr, col])
                    buf.note_external(r, v)
                else:
                    v = buf.emit_diagonal(r)
                    if v is NEED_MEMORY:
                        assert not buf.shadow_enabled and col >= oc
                        refetches += 1
                        v = int(region[rr, col])
                    else:
                        assert v == region[rr, col], (r, w, col, v)
                lines[r] = lines[r][1:] + [int(v)]
        buf.end_cycle()
        for i in range(k - 1):
            peak[i] = max(peak[i], buf.fifo_len(i))
    assert all(buf.row_done(r) for r in range(k))
    return kept, dropped, peak, refetches


def region_of(rows, width, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(-128, 128, size=(rows, width)).astype(np.int64)


def test_constructor_bounds():
    with pytest.raises(OutOfBounds):
        RecyclingBuffer(1, 16)
    with pytest.raises(OutOfBounds):
        RecyclingBuffer(3, 4)
    RecyclingBuffer(3, 5)


def test_configure_bounds():
    buf = RecyclingBuffer(3, 16)
    with pytest.raises(IfmapTooNarrow):
        buf.configure(4, 3)
    with pytest.raises(IfmapTooWide):
        buf.configure(17, 3)
    with pytest.raises(OutOfBounds):
        buf.configure(8, 0)
    buf.configure(8, 3)
    assert buf.out_cols == 6
    assert buf.depth == 4


def test_unconfigured_calls_rejected():
    buf = RecyclingBuffer(3, 16)
    with pytest.raises(NotConfigured):
        buf.push(1, 5)
    with pytest.raises(NotConfigured):
        buf.end_cycle()
    with pytest.raises(NotConfigured):
        buf.state()


def test_mode_change_blocked_mid_stream():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 3)
    buf.set_mode(False)
    buf.set_mode(True)
    buf.note_external_row(0, [1, 2, 3])
    with pytest.raises(ModeChangeMidLayer):
        buf.set_mode(False)
    buf.configure(8, 3)
    buf.set_mode(False)


def test_full_stream_values_and_balance():
    buf = RecyclingBuffer(3, 64)
    region = region_of(8, 8, seed=1)
    kept, dropped, peak, refetches = drive_region(buf, region)
    # 6 output rows, 6 columns each: 5 windows feed the row above
    assert kept == [30, 30]
    assert dropped == [6, 6]
    assert refetches == 0
    assert peak == [buf.depth, buf.depth]
    assert all(buf.fifo_len(i) == 0 for i in range(2))


def test_full_stream_without_end_of_row_reuse():
    buf = RecyclingBuffer(3, 64, shadow_enabled=False)
    region = region_of(8, 8, seed=2)
    *_, refetches = drive_region(buf, region)
    # 2 tail columns x 2 recycled rows x 5 later output rows
    assert refetches == (3 - 1) ** 2 * (8 - 3)


def test_minimum_streamable_width_uses_staged_bypass():
    # width 2k: the restore's last value arrives the same cycle it is popped
    buf = RecyclingBuffer(3, 64)
    region = region_of(9, 6, seed=3)
    kept, dropped, peak, _ = drive_region(buf, region)
    assert kept == [24, 24]
    assert dropped == [4, 4]


@settings(max_examples=50, deadline=None)
@given(
    k=st.integers(2, 4),
    extra_w=st.integers(0, 8),
    extra_h=st.integers(0, 8),
    shadow=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_stream_protocol_property(k, extra_w, extra_h, shadow, seed):
    width = 2 * k + extra_w
    rows = k + 1 + extra_h
    buf = RecyclingBuffer(k, 64, shadow_enabled=shadow)
    region = region_of(rows, width, seed=seed)
    kept, dropped, peak, refetches = drive_region(buf, region)
    oc = width - k + 1
    out_rows = rows - k + 1
    assert kept == [(out_rows - 1) * oc] * (k - 1)
    assert dropped == [oc] * (k - 1)
    # the provisioned depth is reached but never exceeded
    assert peak == [buf.depth] * (k - 1)
    want_refetch = 0 if shadow else (k - 1) ** 2 * (out_rows - 1)
    assert refetches == want_refetch


def test_single_output_row_never_recycles():
    # region exactly k tall: one window, everything external, pushes dropped
    buf = RecyclingBuffer(3, 64)
    region = region_of(3, 7, seed=4)
    kept, dropped, peak, refetches = drive_region(buf, region)
    assert kept == [0, 0]
    assert peak == [0, 0]
    assert refetches == 0


def test_shadow_bank_contents_and_eviction():
    buf = RecyclingBuffer(3, 64)
    region = np.arange(1, 65, dtype=np.int64).reshape(8, 8)
    buf.configure(8, 6)
    k, oc, n_stream = 3, 6, 36
    lines = [[0] * k for _ in range(k)]
    snapshots = {}
    for t in range(14):
        for r in range(1, k):
            if 1 <= t - r <= n_stream:
                buf.push(r, lines[r][0])
        for r in range(k):
            s = t - r
            if not 0 <= s < n_stream:
                continue
            w, x = divmod(s, oc)
            rr = w + r
            if x == 0:
                if w == 0 or r == k - 1:
                    vals = [int(v) for v in region[rr, :k]]
                    buf.note_external_row(r, vals)
                else:
                    vals = buf.restore_row(r)
                lines[r] = list(vals)
            else:
                col = x + k - 1
                if w == 0 or r == k - 1:
                    v = int(region[rr, col])
                    buf.note_external(r, v)
                else:
                    v = buf.emit_diagonal(r)
                lines[r] = lines[r][1:] + [int(v)]
        buf.end_cycle()
        snapshots[t] = buf.state().shadow
    # row 1's tail (15, 16) lands at t=5,6; row 2's (23, 24) at t=6,7
    assert snapshots[7] == ((1, (15, 16)), (2, (23, 24)))
    # top PE row wraps past input row 1 at t=11, freeing its registers,
    # while the bottom row's window 1 starts filling input row 3
    assert snapshots[12] == ((2, (23, 24)), (3, (31, None)))


def test_push_bounds_and_double_push():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 4)
    with pytest.raises(OutOfBounds):
        buf.push(0, 1)
    with pytest.raises(OutOfBounds):
        buf.push(3, 1)
    assert buf.push(1, 7) is True
    with pytest.raises(WrongPhase):
        buf.push(1, 8)
    buf.end_cycle()
    assert buf.fifo_len(0) == 1


def test_push_suppressed_when_no_consumer():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 1)
    # single output row: the rows above never come back for these
    assert buf.push(1, 5) is False
    assert buf.push(2, 5) is False
    assert buf.fifo_len(0) == 0


def test_feed_protocol_violations():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 3)
    with pytest.raises(WrongPhase):
        buf.note_external(0, 5)          # window starts need a row load
    buf.note_external_row(0, [1, 2, 3])
    with pytest.raises(WrongPhase):
        buf.note_external_row(0, [4, 5, 6])   # mid window now
    with pytest.raises(WrongPhase):
        buf.note_external_row(0, [1, 2])      # wrong arity
    with pytest.raises(WrongPhase):
        buf.restore_row(2)               # bottom row always external
    with pytest.raises(WrongPhase):
        buf.emit_diagonal(0)             # first window comes from memory
    with pytest.raises(OutOfBounds):
        buf.note_external(5, 1)


def test_restore_underflow():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 2)
    # walk row 0 through window 0 without ever pushing exits
    buf.note_external_row(0, [1, 2, 3])
    for col in range(3, 8):
        buf.note_external(0, col)
    buf.end_cycle()
    with pytest.raises(Underflow):
        buf.restore_row(0)


def test_middle_row_external_blocked_after_first_window():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 3)
    buf.note_external_row(1, [1, 2, 3])
    for col in range(3, 8):
        buf.note_external(1, col)
    # row 1 now starts window 1 and must restore, not reload
    with pytest.raises(WrongPhase):
        buf.note_external_row(1, [9, 9, 9])


def test_finished_row_rejects_feeds():
    buf = RecyclingBuffer(3, 16)
    buf.configure(8, 1)
    buf.note_external_row(2, [1, 2, 3])
    for col in range(3, 8):
        buf.note_external(2, col)
    assert buf.row_done(2)
    with pytest.raises(WrongPhase):
        buf.note_external_row(2, [1, 2, 3])


def test_shadow_shift_reports_no_stale_rows_after_drive():
    buf = RecyclingBuffer(3, 64)
    drive_region(buf, region_of(7, 8, seed=5))
    assert buf.shadow_shift() == 0
