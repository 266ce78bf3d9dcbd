"""Analytical cost model.

Two granularities live here.  The per-channel model mirrors the usual
back-of-envelope accounting for recycling arrays: one fetch per input
element, plus, for the baseline without end-of-row reuse, a fixed
(k-1)^2 re-fetch penalty per output-row transition regardless of padding
or stride.  It feeds the improvement-ratio tables.  The exact model walks
the same pass schedule the simulator executes and reproduces its counters
address for address; validate_model_vs_sim() holds the two sides together.

Ratios use exact rational arithmetic end to end.  Some published operating
points sit fractions of a percent from a band edge, so one float rounding
step is enough to flip a comparison.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import ModelMismatch, UnsupportedMode
from .memory import CONVENTIONS, AccessCounters
from .orchestrator import (
    build_pass_schedule,
    expected_fetch_counts,
    pass_cycles,
)
from .workload import ArchConfig, LayerConfig, plan_tiling

# Useful operations one slice retires per external input fetch, this
# architecture against the single-slice recycling baseline at matched
# geometry: 168 versus 64, or 21/8.
SLICE_OPS_RATIO = Fraction(168, 64)


def count_macs(layer: LayerConfig) -> int:
    return (layer.kernel_size ** 2 * layer.in_channels
            * layer.out_height * layer.out_width * layer.num_filters)


def count_ops(layer: LayerConfig) -> int:
    """Multiplies and adds both counted, so two per MAC."""
    return 2 * count_macs(layer)


def baseline_extra_accesses(layer: LayerConfig) -> int:
    """Per-channel re-fetch volume when end-of-row reuse is absent: the
    last k-1 columns load again for every output row after the first."""
    k = layer.kernel_size
    return (k - 1) ** 2 * (layer.out_height - 1)


def channel_accesses(layer: LayerConfig, end_row_reuse: bool) -> int:
    """Input fetches for one channel under the per-channel model."""
    base = layer.width * layer.height
    if end_row_reuse:
        return base
    return base + baseline_extra_accesses(layer)


def layer_traffic(layer: LayerConfig, end_row_reuse: bool,
                  convention: str = "ifmap") -> int:
    """Whole-layer access total under a counting convention."""
    if convention not in CONVENTIONS:
        raise UnsupportedMode(f"unknown convention {convention!r}")
    total = layer.in_channels * channel_accesses(layer, end_row_reuse)
    if convention in ("ifmap+w", "all"):
        total += (layer.kernel_size ** 2 * layer.in_channels
                  * layer.num_filters)
    if convention == "all":
        total += layer.out_height * layer.out_width * layer.num_filters
    return total


def access_ratio(layer: LayerConfig, convention: str = "ifmap") -> Fraction:
    """Baseline traffic over reuse-enabled traffic, exact."""
    return Fraction(layer_traffic(layer, False, convention),
                    layer_traffic(layer, True, convention))


def improvement_ratio(layer: LayerConfig,
                      convention: str = "ifmap") -> Fraction:
    """Throughput-per-access gain over the baseline array: the per-slice
    operations factor times the access ratio."""
    return SLICE_OPS_RATIO * access_ratio(layer, convention)


def improvement_table(layers, convention: str = "ifmap") -> list:
    rows = []
    for i, layer in enumerate(layers):
        ratio = improvement_ratio(layer, convention)
        rows.append({
            "index": i,
            "layer": layer,
            "convention": convention,
            "access_ratio": access_ratio(layer, convention),
            "ratio": ratio,
            "ratio_float": float(ratio),
        })
    return rows


def overhead_percent(size: int, k: int = 3) -> Fraction:
    """Baseline re-fetch volume as a percentage of a square unpadded
    input's footprint.  Shrinks as the input grows."""
    layer = LayerConfig(size, size, 1, 1, k)
    return Fraction(100 * baseline_extra_accesses(layer), size * size)


def overhead_curve(sizes, k: int = 3) -> list:
    return [(size, float(overhead_percent(size, k))) for size in sizes]


def peak_throughput(arch: ArchConfig) -> int:
    """Ops per second with every PE busy: two per MAC, one MAC per PE
    per cycle."""
    return 2 * arch.num_pes * arch.clock_freq_hz


def format_tops(ops_per_second: int) -> str:
    return f"{ops_per_second / 1e12:.2f} TOPS"


def expected_counters(layer: LayerConfig, arch: ArchConfig,
                      shadow_enabled: bool = True,
                      count_spill: bool = True):
    """Exact predicted counters and cycle count for a simulator run.

    Walks the pass schedule and sums each stream's per-address fetch
    pattern, so it is valid for kernel tiling, padding, and partial core
    occupancy alike.  Unit stride only, like the simulator.
    """
    plan = plan_tiling(layer, arch, simulator=True)
    schedule = build_pass_schedule(layer, arch, plan)
    k = arch.hw_kernel
    out_rows, out_cols = layer.out_height, layer.out_width
    region_h = out_rows + k - 1
    region_w = out_cols + k - 1
    pad = layer.padding
    counters = AccessCounters()
    pattern_cache = {}
    for spec in schedule:
        for assign in spec.assignments:
            r0 = max(0, pad - assign.row_off)
            r1 = min(region_h, layer.height + pad - assign.row_off)
            c0 = max(0, pad - assign.col_off)
            c1 = min(region_w, layer.width + pad - assign.col_off)
            if r1 <= r0 or c1 <= c0:
                continue
            covered = (r1 - r0) * (c1 - c0)
            if shadow_enabled:
                counters.ifmap_reads += covered
            else:
                key = (r0, r1, c0, c1)
                if key not in pattern_cache:
                    counts = expected_fetch_counts(
                        region_h, region_w, k, out_rows, out_cols, False)
                    pattern_cache[key] = int(counts[r0:r1, c0:c1].sum())
                reads = pattern_cache[key]
                counters.ifmap_reads += reads
                counters.ifmap_rereads += reads - covered
    counters.weight_reads = (layer.kernel_size ** 2 * layer.in_channels
                             * layer.num_filters)
    n_out = out_rows * out_cols * layer.num_filters
    counters.ofmap_writes = n_out
    accum = plan.channel_groups * plan.tile_rounds
    if count_spill and accum > 1:
        counters.psum_writes = (accum - 1) * n_out
        counters.psum_reads = (accum - 1) * n_out
    cycles = len(schedule) * pass_cycles(out_rows, out_cols, k)
    return counters, cycles


def validate_model_vs_sim(result) -> dict:
    """Check a simulation's counters and cycles against the exact model.

    Returns the agreed values; raises ModelMismatch carrying the per-field
    deltas (model minus simulator) when anything disagrees.
    """
    model, cycles = expected_counters(
        result.layer, result.arch, shadow_enabled=result.shadow_enabled,
        count_spill=result.count_spill)
    deltas = {}
    got = result.counters.as_dict()
    want = model.as_dict()
    for name in want:
        if want[name] != got[name]:
            deltas[name] = want[name] - got[name]
    if cycles != result.cycles:
        deltas["cycles"] = cycles - result.cycles
    if deltas:
        raise ModelMismatch("simulator and model disagree", deltas=deltas)
    agreed = dict(got)
    agreed["cycles"] = result.cycles
    return agreed
