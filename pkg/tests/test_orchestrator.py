import numpy as np
import pytest

from helpers import FULL_ARCH, SMALL_ARCH, arange_image, ones_filter, run_pair
from triconv.errors import (
    ChannelCountMismatch,
    IfmapTooNarrow,
    ShapeMismatch,
    UnsupportedStrideForSim,
    WrongPhase,
)
from triconv.orchestrator import (
    Array,
    Phase,
    build_pass_schedule,
    expected_fetch_counts,
    pass_cycles,
    phase_at,
    run_layer,
)
from triconv.trace import SimTrace
from triconv.workload import (
    ArchConfig,
    LayerConfig,
    plan_tiling,
    random_filters,
    random_ifmaps,
)


def test_pass_cycles():
    assert pass_cycles(6, 6, 3) == 43
    assert pass_cycles(1, 4, 3) == 11


def test_phase_sequence_for_one_pass():
    phases = [phase_at(t, 3, 6, 6) for t in range(43)]
    assert phases[:3] == [Phase.WEIGHT_LOAD] * 3
    assert phases[3:6] == [Phase.FILL] * 3
    assert phases[6] == Phase.STEADY
    # each later output row opens with k transition cycles
    assert phases[9:12] == [Phase.ROW_TRANSITION] * 3
    assert phases[12] == Phase.STEADY
    assert phases[39:] == [Phase.DRAIN] * 4


def test_expected_fetch_counts_shadow_on():
    counts = expected_fetch_counts(8, 8, 3, 6, 6, True)
    assert (counts == 1).all()


def test_expected_fetch_counts_shadow_off():
    counts = expected_fetch_counts(8, 8, 3, 6, 6, False)
    assert (counts[:, :6] == 1).all()
    # tail columns: input row p is replayed for output rows
    # max(1, p-1) .. min(p, 5)
    assert counts[:, 6].tolist() == [1, 2, 3, 3, 3, 3, 2, 1]
    assert np.array_equal(counts[:, 6], counts[:, 7])
    assert counts.sum() == 64 + 20


def test_schedule_filter_major_order():
    layer = LayerConfig(14, 14, 16, 24, 3)
    arch = ArchConfig()
    specs = build_pass_schedule(layer, arch, plan_tiling(layer, arch))
    assert len(specs) == 3 * 2
    assert [s.filter_group for s in specs] == [0, 0, 1, 1, 2, 2]
    assert [s.channel_group for s in specs] == [0, 1, 0, 1, 0, 1]
    assert specs[0].filter_indices == tuple(range(8))
    assert specs[-1].filter_indices == tuple(range(16, 24))
    assert [s.first_accum for s in specs] == [1, 0, 1, 0, 1, 0]
    assert [s.last_accum for s in specs] == [0, 1, 0, 1, 0, 1]
    # every pass keeps all 8 cores busy on distinct channels
    for spec in specs:
        assert len(spec.assignments) == 8
        chans = {a.channel for a in spec.assignments}
        assert len(chans) == 8


def test_schedule_spreads_tiles_across_cores():
    layer = LayerConfig(12, 12, 2, 4, 5, 1, 2)
    arch = ArchConfig(cores=8, slices_per_core=4)
    plan = plan_tiling(layer, arch)
    assert plan.cores_per_channel == 4
    specs = build_pass_schedule(layer, arch, plan)
    assert len(specs) == 1
    jobs = {(a.core, a.channel, a.tile_index) for a in specs[0].assignments}
    assert jobs == {(0, 0, 0), (1, 0, 1), (2, 0, 2), (3, 0, 3),
                    (4, 1, 0), (5, 1, 1), (6, 1, 2), (7, 1, 3)}


def test_known_output_plane():
    res = run_layer(LayerConfig(8, 8, 1, 1, 3), SMALL_ARCH,
                    arange_image(8, 8), ones_filter(3))
    first_row = [90, 99, 108, 117, 126, 135]
    assert res.ofmaps[0][0].tolist() == first_row
    assert res.ofmaps[0][1, 0] == 162
    assert res.cycles == 43
    assert res.passes == 1


@pytest.mark.parametrize("layer,arch", [
    (LayerConfig(10, 9, 2, 3, 3), ArchConfig(cores=2, slices_per_core=2)),
    (LayerConfig(9, 9, 2, 3, 3, 1, 1), ArchConfig(cores=2, slices_per_core=4)),
    (LayerConfig(12, 12, 3, 5, 5, 1, 2), FULL_ARCH),
    (LayerConfig(16, 9, 8, 8, 3), FULL_ARCH),
])
def test_matches_reference_conv(layer, arch):
    res, gold = run_pair(layer, arch, seed=21)
    assert np.array_equal(res.ofmaps, np.asarray(gold.ofmaps))


def test_extra_slices_hold_zero_weights():
    # 3 filters on 4 slices per core: the idle slice must not disturb sums
    layer = LayerConfig(9, 8, 2, 3, 3)
    arch = ArchConfig(cores=2, slices_per_core=4)
    res, gold = run_pair(layer, arch, seed=8)
    assert np.array_equal(res.ofmaps, np.asarray(gold.ofmaps))


def test_commit_cadence_one_output_per_cycle():
    trace = SimTrace()
    layer = LayerConfig(8, 8, 1, 1, 3)
    run_layer(layer, SMALL_ARCH, arange_image(8, 8), ones_filter(3),
              trace=trace)
    commits = trace.find_events("commit")
    assert len(commits) == 36
    cycles = [sc for sc, ev in commits]
    # k + 2 onward, strictly consecutive
    assert cycles == list(range(5, 5 + 36))
    positions = [(ev[1], ev[2]) for _, ev in commits]
    assert positions == [(w, x) for w in range(6) for x in range(6)]


def test_trace_schedule_anchors():
    """The documented single-core schedule on the 1..64 test image."""
    trace = SimTrace()
    run_layer(LayerConfig(8, 8, 1, 1, 3), SMALL_ARCH, arange_image(8, 8),
              ones_filter(3), trace=trace)
    restores = trace.find_events("restore")
    # row 0's first restore returns input row 1's first three values
    assert restores[0] == (7, ("restore", 0, (9, 10, 11)))
    captures = {(sc, ev[3]) for sc, ev in trace.find_events("capture")}
    assert {(6, 15), (7, 16), (7, 23), (8, 24)} <= captures
    emits = {(sc, ev[4]) for sc, ev in trace.find_events("emit_shadow")}
    assert {(11, 15), (12, 16), (12, 23), (13, 24)} <= emits


def test_trace_windowing():
    trace = SimTrace(start=5, stop=9)
    run_layer(LayerConfig(8, 8, 1, 1, 3), SMALL_ARCH, arange_image(8, 8),
              ones_filter(3), trace=trace)
    assert len(trace.records) == 4
    assert [r.cycle for r in trace.records] == [5, 6, 7, 8]
    assert [r.stream_cycle for r in trace.records] == [3, 4, 5, 6]


def test_fetch_maps_single_fetch_everywhere():
    layer = LayerConfig(9, 8, 2, 2, 3)
    arch = ArchConfig(cores=2, slices_per_core=2)
    ifm = random_ifmaps(layer, seed=3)
    flt = random_filters(layer, seed=3)
    res = run_layer(layer, arch, ifm, flt, keep_fetch_maps=True)
    assert len(res.fetch_maps) == 2
    for entry in res.fetch_maps:
        assert (entry["counts"] == 1).all()


def test_fetch_maps_rereads_without_reuse():
    layer = LayerConfig(8, 8, 1, 1, 3)
    arch = ArchConfig(cores=1, slices_per_core=1, shadow_enabled=False)
    res = run_layer(layer, arch, arange_image(8, 8), ones_filter(3),
                    keep_fetch_maps=True)
    counts = res.fetch_maps[0]["counts"]
    assert np.array_equal(counts,
                          expected_fetch_counts(8, 8, 3, 6, 6, False))


def test_array_reuse_across_layers():
    arch = ArchConfig(cores=1, slices_per_core=1)
    array = Array(arch)
    for seed, layer in [(0, LayerConfig(8, 8, 1, 1, 3)),
                        (1, LayerConfig(10, 7, 1, 1, 3))]:
        ifm = random_ifmaps(layer, seed=seed)
        flt = random_filters(layer, seed=seed)
        array.begin_layer(layer, ifm, flt)
        res = array.run_to_end()
        from triconv.golden import conv_layer
        gold = conv_layer(layer, ifm, flt)
        assert np.array_equal(res.ofmaps, np.asarray(gold.ofmaps))


def test_input_validation():
    layer = LayerConfig(9, 8, 2, 1, 3)
    arch = SMALL_ARCH
    ifm = random_ifmaps(layer, seed=0)
    flt = random_filters(layer, seed=0)
    with pytest.raises(ChannelCountMismatch):
        run_layer(layer, arch, ifm[:1], flt)
    with pytest.raises(ChannelCountMismatch):
        run_layer(layer, arch, ifm, [])
    with pytest.raises(ShapeMismatch):
        run_layer(layer, arch, [ch.T for ch in ifm], flt)


def test_narrow_stream_rejected():
    layer = LayerConfig(5, 8, 1, 1, 3)
    with pytest.raises(IfmapTooNarrow):
        run_layer(layer, SMALL_ARCH, random_ifmaps(layer, 0),
                  random_filters(layer, 0))


def test_stride_rejected():
    layer = LayerConfig(9, 9, 1, 1, 3, stride=2)
    with pytest.raises(UnsupportedStrideForSim):
        run_layer(layer, SMALL_ARCH, random_ifmaps(layer, 0),
                  random_filters(layer, 0))


def test_result_gating():
    array = Array(SMALL_ARCH)
    with pytest.raises(WrongPhase):
        array.step_cycle()
    layer = LayerConfig(8, 8, 1, 1, 3)
    array.begin_layer(layer, arange_image(8, 8), ones_filter(3))
    array.step_cycle()
    with pytest.raises(WrongPhase):
        array.result()
    assert array.phase == Phase.WEIGHT_LOAD
    array.run_to_end()
    assert array.result().cycles == 43
    assert array.phase == Phase.IDLE
