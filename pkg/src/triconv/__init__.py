"""Cycle-accurate simulator and analytical cost model for a
weight-stationary systolic convolution array with input recycling."""

from .analytics import (
    SLICE_OPS_RATIO,
    access_ratio,
    baseline_extra_accesses,
    count_macs,
    count_ops,
    expected_counters,
    format_tops,
    improvement_ratio,
    improvement_table,
    overhead_curve,
    overhead_percent,
    peak_throughput,
    validate_model_vs_sim,
)
from .errors import SimulatorError
from .golden import GoldenResult, conv2d_fast, conv2d_valid, conv_layer, \
    conv_via_tiles
from .memory import AccessCounters, IfmapStream, OutputStore, WeightStore
from .orchestrator import (
    Array,
    Phase,
    SimResult,
    build_pass_schedule,
    expected_fetch_counts,
    pass_cycles,
    phase_at,
    run_layer,
)
from .recycling import NEED_MEMORY, IRBState, RecyclingBuffer
from .slice_engine import PEState, Slice, SliceBank, adder_tree_sum
from .trace import SimTrace, TraceRecord, dump_trace
from .workload import (
    ArchConfig,
    LayerConfig,
    TilingPlan,
    alexnet_layers,
    load_layer_file,
    make_layer_config,
    pad_kernel_tiles,
    plan_tiling,
    random_filters,
    random_ifmaps,
    topology_layers,
    vgg16_layers,
)

__version__ = "0.1.0"
