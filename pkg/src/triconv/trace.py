"""Cycle-by-cycle execution records.

Tracing is opt-in and windowed: the simulator only builds records for global
cycles inside the requested range, so big runs stay fast.  Each record is the
post-cycle state of one core: the activation plane with per-register source
tags, recycling-buffer occupancy, adder-tree outputs, and the structured
events of that cycle (loads, restores, emits, captures, pushes, commits).

Source tags:
    E  entered from external memory this hop
    H  moved horizontally from the neighbor PE
    G  returned from a recycling queue
    Y  replayed from the end-of-row shadow bank
    X  never written
"""

from __future__ import annotations

from dataclasses import dataclass, field

TAG_UNSET = "X"
TAG_EXTERNAL = "E"
TAG_HORIZONTAL = "H"
TAG_QUEUE = "G"
TAG_SHADOW = "Y"


@dataclass(frozen=True)
class TraceRecord:
    """State of one core after one cycle.

    stream_cycle counts 1 from the first activation fetch of the pass, which
    is the natural reference point when lining cycles up against a dataflow
    diagram; weight-load cycles sit at zero and below.
    """

    pass_index: int
    cycle: int
    stream_cycle: int
    phase: str
    core: int
    acts: tuple
    tags: tuple
    fifo_lens: tuple
    shadow: tuple
    tree: tuple
    events: tuple


@dataclass
class SimTrace:
    """Record sink with a global-cycle capture window."""

    start: int = 0
    stop: int = 1 << 62
    records: list = field(default_factory=list)

    def wants(self, global_cycle: int) -> bool:
        return self.start <= global_cycle < self.stop

    def add(self, record: TraceRecord):
        self.records.append(record)

    def events_at(self, stream_cycle: int, core: int = 0) -> list:
        out = []
        for rec in self.records:
            if rec.stream_cycle == stream_cycle and rec.core == core:
                out.extend(rec.events)
        return out

    def find_events(self, kind: str, core: int = 0) -> list:
        """All (stream_cycle, event) pairs of one event kind for a core."""
        out = []
        for rec in self.records:
            if rec.core != core:
                continue
            for ev in rec.events:
                if ev[0] == kind:
                    out.append((rec.stream_cycle, ev))
        return out


def _format_event(ev) -> str:
    kind, rest = ev[0], ev[1:]
    parts = []
    for item in rest:
        if isinstance(item, tuple):
            parts.append(",".join(str(v) for v in item))
        else:
            parts.append(str(item))
    return kind + "(" + ";".join(parts) + ")"


def format_record(rec: TraceRecord) -> str:
    acts = "/".join(",".join(str(v) for v in row) for row in rec.acts)
    tags = "/".join("".join(row) for row in rec.tags)
    shadow = ";".join(f"{row}:" + ",".join(str(v) for v in vals)
                      for row, vals in rec.shadow) or "-"
    fifo = ",".join(str(n) for n in rec.fifo_lens) or "-"
    tree = ",".join(str(v) for v in rec.tree)
    events = " ".join(_format_event(ev) for ev in rec.events) or "-"
    return (f"p{rec.pass_index:03d} c{rec.cycle:05d} s{rec.stream_cycle:+05d} "
            f"{rec.phase:<13s} k{rec.core:02d} | a={acts} t={tags} "
            f"| f={fifo} | sh={shadow} | y={tree} | {events}")


def dump_trace(trace: SimTrace) -> str:
    """Fixed-layout text dump, identical bytes for identical runs."""
    header = ("# columns: pass cycle stream_cycle phase core | activations "
              "tags | fifo depths | shadow rows | tree outputs | events")
    lines = [header]
    lines.extend(format_record(rec) for rec in trace.records)
    return "\n".join(lines) + "\n"
