"""Command line front end.

Four subcommands: simulate (cycle-accurate run of one layer, checked against
the direct convolution and the analytical model), analyze (cost model over a
layer table), compare (same layer with and without end-of-row reuse), and
trace (windowed cycle records).  Report paths write report.json, report.csv
with '#' metadata lines, figures as PNG, plus ofmap.bin and trace.txt where
they apply.  Runs are deterministic for a given seed, byte for byte.

Exit codes: 0 success, 1 simulation disagreed with the reference or model
(or failed internally), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import struct
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analytics, figures
from .errors import (
    ConflictingFlags,
    IoError,
    RangeError,
    SimulatorError,
    UnsupportedStrideForSim,
    UsageError,
)
from .golden import conv_layer
from .memory import CONVENTIONS
from .orchestrator import run_layer
from .trace import SimTrace, dump_trace
from .workload import (
    ACT_MAX,
    ACT_MIN,
    ArchConfig,
    LayerConfig,
    random_filters,
    random_ifmaps,
    topology_layers,
)

SCHEMA = "triconv-report/1"

_DEFAULTS = {
    "arch": "8,8,3",
    "shadow": "on",
    "counting": "ifmap",
    "spill": "on",
    "seed": 0,
    "out": "triconv_out",
}


# --- flag parsing --------------------------------------------------------

def _ints(text: str, flag: str) -> list:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers, "
                         f"got {text!r}") from exc


def parse_layer_flag(text: str) -> LayerConfig:
    fields = _ints(text, "--layer")
    if not 5 <= len(fields) <= 7:
        raise UsageError("--layer is W,H,C,F,K[,S[,P]]")
    return LayerConfig(*fields)


def parse_arch_flag(text: str, shadow_enabled: bool) -> ArchConfig:
    fields = _ints(text, "--arch")
    if len(fields) != 3:
        raise UsageError("--arch is CORES,SLICES,K")
    return ArchConfig(cores=fields[0], slices_per_core=fields[1],
                      hw_kernel=fields[2], shadow_enabled=shadow_enabled)


def parse_window(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError("--trace-window is START:STOP in global cycles")
    try:
        start, stop = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise UsageError(f"bad --trace-window {text!r}") from exc
    if start < 0 or stop <= start:
        raise UsageError("--trace-window needs 0 <= START < STOP")
    return start, stop


def _on_off(value: str, flag: str) -> bool:
    if value not in ("on", "off"):
        raise UsageError(f"{flag} is on|off, got {value!r}")
    return value == "on"


def _apply_config(opt: argparse.Namespace):
    """Fill unset flags from --config JSON, then from built-in defaults."""
    if getattr(opt, "config", None):
        try:
            loaded = json.loads(Path(opt.config).read_text())
        except OSError as exc:
            raise IoError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise IoError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise IoError("config must be a JSON object")
        for key, value in loaded.items():
            name = key.replace("-", "_")
            if not hasattr(opt, name):
                raise UsageError(f"unknown config key {key!r}")
            if getattr(opt, name) is None:
                setattr(opt, name, value)
    for name, value in _DEFAULTS.items():
        if hasattr(opt, name) and getattr(opt, name) is None:
            setattr(opt, name, value)


def _need_layer(opt) -> LayerConfig:
    if getattr(opt, "topology", None):
        raise ConflictingFlags(
            f"{opt.cmd} works on a single layer; use --layer")
    if not opt.layer:
        raise UsageError(f"{opt.cmd} requires --layer")
    return parse_layer_flag(str(opt.layer))


def _arch_of(opt, shadow_override=None) -> ArchConfig:
    shadow = _on_off(str(opt.shadow), "--shadow") \
        if shadow_override is None else shadow_override
    return parse_arch_flag(str(opt.arch), shadow)


def _load_plane_file(path: str, what: str) -> np.ndarray:
    try:
        arr = np.load(path)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read {what} from {path}: {exc}") from exc
    arr = np.asarray(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        raise RangeError(f"{what} must be integer-typed, got {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < ACT_MIN or arr.max() > ACT_MAX):
        raise RangeError(f"{what} values must lie in "
                         f"[{ACT_MIN}, {ACT_MAX}]")
    return arr


def _tensors(opt, layer: LayerConfig):
    seed = int(opt.seed)
    if getattr(opt, "ifmap", None):
        arr = _load_plane_file(opt.ifmap, "--ifmap")
        want = (layer.in_channels, layer.height, layer.width)
        if arr.shape != want:
            raise RangeError(f"--ifmap shape {arr.shape}, expected {want}")
        ifmaps = [arr[c] for c in range(layer.in_channels)]
    else:
        ifmaps = random_ifmaps(layer, seed)
    if getattr(opt, "weights", None):
        arr = _load_plane_file(opt.weights, "--weights")
        k = layer.kernel_size
        want = (layer.num_filters, layer.in_channels, k, k)
        if arr.shape != want:
            raise RangeError(f"--weights shape {arr.shape}, expected {want}")
        filters = [[arr[f, c] for c in range(layer.in_channels)]
                   for f in range(layer.num_filters)]
    else:
        filters = random_filters(layer, seed)
    return ifmaps, filters


# --- report writers ------------------------------------------------------

def _layer_dict(layer: LayerConfig) -> dict:
    return {"width": layer.width, "height": layer.height,
            "in_channels": layer.in_channels,
            "num_filters": layer.num_filters,
            "kernel_size": layer.kernel_size, "stride": layer.stride,
            "padding": layer.padding,
            "out_height": layer.out_height, "out_width": layer.out_width}


def _arch_dict(arch: ArchConfig) -> dict:
    return {"cores": arch.cores, "slices_per_core": arch.slices_per_core,
            "hw_kernel": arch.hw_kernel,
            "buffer_capacity": arch.buffer_capacity,
            "clock_freq_hz": arch.clock_freq_hz,
            "shadow_enabled": arch.shadow_enabled}


def _jsonable(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_report_json(path: Path, payload: dict) -> str:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return str(path)


def write_report_csv(path: Path, meta: dict, header: list,
                     rows: list) -> str:
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {meta[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


OFMAP_MAGIC = b"OFMP"
OFMAP_VERSION = 1


def write_ofmap_bin(path: Path, ofmaps: np.ndarray) -> str:
    """Binary output dump: 16-byte header (magic, version, out height, out
    width, all little-endian 32-bit), then every filter plane in order as
    int32 row-major."""
    arr = np.asarray(ofmaps, dtype=np.int64)
    if arr.ndim != 3:
        raise RangeError("ofmap dump expects (filters, rows, cols)")
    if arr.size and (arr.min() < -2 ** 31 or arr.max() >= 2 ** 31):
        raise RangeError("output values exceed 32-bit accumulator range")
    header = struct.pack("<4sIII", OFMAP_MAGIC, OFMAP_VERSION,
                         arr.shape[1], arr.shape[2])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<i4").tobytes())
    return str(path)


def read_ofmap_bin(path) -> np.ndarray:
    """Inverse of write_ofmap_bin; plane count comes from the file size."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise IoError(f"{path} too short for a header")
    magic, version, rows, cols = struct.unpack("<4sIII", raw[:16])
    if magic != OFMAP_MAGIC:
        raise IoError(f"{path} has wrong magic {magic!r}")
    if version != OFMAP_VERSION:
        raise IoError(f"{path} has unsupported version {version}")
    body = np.frombuffer(raw[16:], dtype="<i4")
    plane = rows * cols
    if plane == 0 or body.size % plane:
        raise IoError(f"{path} body does not tile into {rows}x{cols} planes")
    return body.reshape(body.size // plane, rows, cols).astype(np.int64)


# --- subcommands ---------------------------------------------------------

def cmd_simulate(opt) -> int:
    layer = _need_layer(opt)
    arch = _arch_of(opt)
    count_spill = _on_off(str(opt.spill), "--spill")
    convention = str(opt.counting)
    if convention not in CONVENTIONS:
        raise UsageError(f"--counting is one of {'|'.join(CONVENTIONS)}")
    ifmaps, filters = _tensors(opt, layer)
    trace = None
    if getattr(opt, "trace_window", None):
        start, stop = parse_window(str(opt.trace_window))
        trace = SimTrace(start=start, stop=stop)
    result = run_layer(layer, arch, ifmaps, filters,
                       count_spill=count_spill, trace=trace)
    reference = conv_layer(layer, ifmaps, filters, fast=True)
    golden_ok = np.array_equal(result.ofmaps, np.stack(reference.ofmaps))
    model_ok = True
    model_deltas = {}
    try:
        analytics.validate_model_vs_sim(result)
    except SimulatorError as exc:
        model_ok = False
        model_deltas = getattr(exc, "deltas", {})
    out = Path(str(opt.out))
    out.mkdir(parents=True, exist_ok=True)
    counters = result.counters.as_dict()
    traffic = {c: result.counters.traffic(c) for c in CONVENTIONS}
    files = {}
    files["ofmap"] = write_ofmap_bin(out / "ofmap.bin", result.ofmaps)
    files["figure"] = figures.save_traffic_figure(
        out / "traffic.png", {"run": counters},
        f"memory traffic, {layer.width}x{layer.height}x"
        f"{layer.in_channels} -> {layer.num_filters}")
    if trace is not None:
        (out / "trace.txt").write_text(dump_trace(trace))
        files["trace"] = str(out / "trace.txt")
    payload = {
        "schema": SCHEMA, "command": "simulate", "seed": int(opt.seed),
        "layer": _layer_dict(layer), "arch": _arch_dict(arch),
        "count_spill": count_spill, "convention": convention,
        "results": {
            "passes": result.passes, "cycles": result.cycles,
            "counters": counters, "traffic": traffic,
            "golden_ok": golden_ok, "model_ok": model_ok,
            "model_deltas": model_deltas,
            "macs": reference.macs,
        },
        "files": {k: Path(v).name for k, v in files.items()},
    }
    files["report"] = write_report_json(out / "report.json", payload)
    meta = {"schema": SCHEMA, "command": "simulate", "seed": int(opt.seed)}
    rows = [["passes", result.passes], ["cycles", result.cycles]]
    rows += sorted(counters.items())
    rows += [[f"traffic_{c}", traffic[c]] for c in CONVENTIONS]
    rows += [["golden_ok", int(golden_ok)], ["model_ok", int(model_ok)]]
    files["csv"] = write_report_csv(out / "report.csv", meta,
                                    ["metric", "value"], rows)
    print(f"simulated {layer.width}x{layer.height}x{layer.in_channels} "
          f"-> {layer.num_filters} filters: {result.passes} passes, "
          f"{result.cycles} cycles")
    print(f"golden check: {'ok' if golden_ok else 'MISMATCH'}")
    if model_ok:
        print("model check: ok")
    else:
        print(f"model check: MISMATCH {model_deltas}")
    for name in sorted(files):
        print(f"wrote {files[name]}")
    return 0 if golden_ok and model_ok else 1


def cmd_analyze(opt) -> int:
    if opt.layer and opt.topology:
        raise ConflictingFlags("--layer and --topology are exclusive")
    if opt.layer:
        layers = [parse_layer_flag(str(opt.layer))]
        source = "layer"
    elif opt.topology:
        layers = topology_layers(str(opt.topology))
        source = str(opt.topology)
    else:
        raise UsageError("analyze requires --layer or --topology")
    arch = _arch_of(opt)
    convention = str(opt.counting)
    if convention not in CONVENTIONS:
        raise UsageError(f"--counting is one of {'|'.join(CONVENTIONS)}")
    rows = analytics.improvement_table(layers, convention)
    sizes = [14, 28, 56, 112, 224]
    curve = analytics.overhead_curve(sizes, arch.hw_kernel)
    peak = analytics.peak_throughput(arch)
    out = Path(str(opt.out))
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "ratios": figures.save_ratio_figure(
            out / "ratios.png", rows,
            f"improvement over no-reuse baseline ({source}, {convention})"),
        "overhead": figures.save_overhead_figure(
            out / "overhead.png", curve, arch.hw_kernel),
    }
    table = [{
        "index": row["index"], "layer": _layer_dict(row["layer"]),
        "access_ratio": row["access_ratio"], "ratio": row["ratio"],
        "ratio_float": row["ratio_float"],
    } for row in rows]
    payload = {
        "schema": SCHEMA, "command": "analyze", "seed": int(opt.seed),
        "source": source, "convention": convention,
        "arch": _arch_dict(arch),
        "results": {
            "layers": table,
            "ratio_min": min(r["ratio_float"] for r in rows),
            "ratio_max": max(r["ratio_float"] for r in rows),
            "overhead_curve": curve,
            "peak_ops_per_s": peak,
            "peak_label": analytics.format_tops(peak),
        },
        "files": {k: Path(v).name for k, v in files.items()},
    }
    files["report"] = write_report_json(out / "report.json", payload)
    meta = {"schema": SCHEMA, "command": "analyze", "seed": int(opt.seed),
            "convention": convention, "source": source}
    csv_rows = []
    for row in rows:
        lyr = row["layer"]
        ratio = row["ratio"]
        csv_rows.append([row["index"], lyr.width, lyr.height,
                         lyr.in_channels, lyr.num_filters, lyr.kernel_size,
                         lyr.stride, lyr.padding, ratio.numerator,
                         ratio.denominator, f"{row['ratio_float']:.6f}"])
    files["csv"] = write_report_csv(
        out / "report.csv", meta,
        ["index", "W", "H", "C", "F", "K", "S", "P",
         "ratio_num", "ratio_den", "ratio"], csv_rows)
    lo = min(r["ratio_float"] for r in rows)
    hi = max(r["ratio_float"] for r in rows)
    print(f"analyzed {len(layers)} layers ({source}, {convention}): "
          f"improvement {lo:.3f} .. {hi:.3f}")
    print(f"peak throughput: {analytics.format_tops(peak)}")
    for name in sorted(files):
        print(f"wrote {files[name]}")
    return 0


def cmd_compare(opt) -> int:
    layer = _need_layer(opt)
    count_spill = _on_off(str(opt.spill), "--spill")
    ifmaps, filters = _tensors(opt, layer)
    result_on = run_layer(layer, _arch_of(opt, shadow_override=True),
                          ifmaps, filters, count_spill=count_spill)
    result_off = run_layer(layer, _arch_of(opt, shadow_override=False),
                           ifmaps, filters, count_spill=count_spill)
    modes_equal = np.array_equal(result_on.ofmaps, result_off.ofmaps)
    reference = conv_layer(layer, ifmaps, filters, fast=True)
    golden_ok = np.array_equal(result_on.ofmaps, np.stack(reference.ofmaps))
    model_ok = True
    try:
        analytics.validate_model_vs_sim(result_on)
        analytics.validate_model_vs_sim(result_off)
    except SimulatorError:
        model_ok = False
    on = result_on.counters.as_dict()
    off = result_off.counters.as_dict()
    out = Path(str(opt.out))
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "figure": figures.save_traffic_figure(
            out / "traffic.png",
            {"with_reuse": on, "without_reuse": off},
            f"traffic with and without end-of-row reuse, "
            f"{layer.width}x{layer.height}"),
    }
    reads_ratio = Fraction(off["ifmap_reads"], on["ifmap_reads"])
    payload = {
        "schema": SCHEMA, "command": "compare", "seed": int(opt.seed),
        "layer": _layer_dict(layer),
        "arch": _arch_dict(_arch_of(opt, shadow_override=True)),
        "count_spill": count_spill,
        "results": {
            "with_reuse": on, "without_reuse": off,
            "cycles": result_on.cycles,
            "modes_equal": modes_equal, "golden_ok": golden_ok,
            "model_ok": model_ok,
            "read_ratio": reads_ratio,
            "read_ratio_float": float(reads_ratio),
        },
        "files": {k: Path(v).name for k, v in files.items()},
    }
    files["report"] = write_report_json(out / "report.json", payload)
    meta = {"schema": SCHEMA, "command": "compare", "seed": int(opt.seed)}
    rows = [["metric", "with_reuse", "without_reuse"]]
    keys = sorted(on)
    csv_rows = [[k, on[k], off[k]] for k in keys]
    csv_rows.append(["cycles", result_on.cycles, result_off.cycles])
    files["csv"] = write_report_csv(out / "report.csv", meta, rows[0],
                                    csv_rows)
    print(f"compare {layer.width}x{layer.height}x{layer.in_channels}: "
          f"reads {on['ifmap_reads']} with reuse, {off['ifmap_reads']} "
          f"without ({off['ifmap_rereads']} re-reads)")
    print(f"mode equivalence: {'ok' if modes_equal else 'MISMATCH'}")
    print(f"golden check: {'ok' if golden_ok else 'MISMATCH'}")
    print(f"model check: {'ok' if model_ok else 'MISMATCH'}")
    for name in sorted(files):
        print(f"wrote {files[name]}")
    return 0 if modes_equal and golden_ok and model_ok else 1


def cmd_trace(opt) -> int:
    layer = _need_layer(opt)
    arch = _arch_of(opt)
    count_spill = _on_off(str(opt.spill), "--spill")
    if getattr(opt, "trace_window", None):
        start, stop = parse_window(str(opt.trace_window))
        trace = SimTrace(start=start, stop=stop)
    else:
        trace = SimTrace()
    ifmaps, filters = _tensors(opt, layer)
    result = run_layer(layer, arch, ifmaps, filters,
                       count_spill=count_spill, trace=trace)
    out = Path(str(opt.out))
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.txt"
    trace_path.write_text(dump_trace(trace))
    payload = {
        "schema": SCHEMA, "command": "trace", "seed": int(opt.seed),
        "layer": _layer_dict(layer), "arch": _arch_dict(arch),
        "results": {"records": len(trace.records),
                    "window": [trace.start, min(trace.stop, result.cycles)],
                    "cycles": result.cycles},
        "files": {"trace": trace_path.name},
    }
    report = write_report_json(out / "report.json", payload)
    print(f"traced {len(trace.records)} records over {result.cycles} cycles")
    print(f"wrote {trace_path}")
    print(f"wrote {report}")
    return 0


# --- parser --------------------------------------------------------------

def _add_common(sp, layer=True, topology=False, tensors=False,
                window=False):
    if layer:
        sp.add_argument("--layer", help="W,H,C,F,K[,S[,P]]")
    if topology:
        sp.add_argument("--topology",
                        help="vgg16, alexnet, or a layer-table file")
    sp.add_argument("--arch", help="CORES,SLICES,K (default 8,8,3)")
    sp.add_argument("--shadow", help="end-of-row reuse on|off (default on)")
    sp.add_argument("--counting",
                    help="traffic convention ifmap|ifmap+w|all")
    sp.add_argument("--spill", help="count partial-sum spill on|off")
    sp.add_argument("--seed", type=int, help="tensor seed (default 0)")
    sp.add_argument("--out", help="report directory (default triconv_out)")
    sp.add_argument("--config", help="JSON file of flag defaults")
    if tensors:
        sp.add_argument("--ifmap", help=".npy input tensor (C,H,W)")
        sp.add_argument("--weights", help=".npy weights (F,C,K,K)")
    if window:
        sp.add_argument("--trace-window", dest="trace_window",
                        help="START:STOP in global cycles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triconv",
        description="cycle-accurate simulator and cost model for a "
                    "weight-stationary convolution array with input "
                    "recycling")
    sub = parser.add_subparsers(dest="cmd", required=True)
    sp = sub.add_parser("simulate", help="run one layer and check it")
    _add_common(sp, tensors=True, window=True)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("analyze", help="cost model over a layer table")
    _add_common(sp, topology=True)
    sp.set_defaults(func=cmd_analyze)
    sp = sub.add_parser("compare",
                        help="one layer with and without end-of-row reuse")
    _add_common(sp, tensors=True)
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("trace", help="dump windowed cycle records")
    _add_common(sp, tensors=True, window=True)
    sp.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    opt = parser.parse_args(argv)
    try:
        _apply_config(opt)
        return opt.func(opt)
    except (UsageError, IoError, RangeError,
            UnsupportedStrideForSim) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
