"""Report figures.

matplotlib is imported lazily with the Agg backend so simulation-only use
never touches it.  Figures are rendered straight to files with fixed sizes
and no timestamps, keeping repeated runs byte-comparable.
"""

from __future__ import annotations


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_ratio_figure(path, rows, label: str) -> str:
    """Bar chart of per-layer improvement ratios from improvement_table."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    xs = [row["index"] for row in rows]
    ys = [row["ratio_float"] for row in rows]
    ax.bar(xs, ys, color="#3b6ea5")
    ax.set_xlabel("layer")
    ax.set_ylabel("improvement ratio")
    ax.set_title(label)
    ax.set_xticks(xs)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def save_overhead_figure(path, curve, k: int) -> str:
    """Re-fetch overhead of the no-shadow baseline versus input size."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    xs = [size for size, _ in curve]
    ys = [pct for _, pct in curve]
    ax.plot(xs, ys, marker="o", markersize=3, color="#a54242")
    ax.set_xlabel("square input size")
    ax.set_ylabel("extra fetches (%)")
    ax.set_title(f"end-of-row re-fetch overhead, {k}x{k} kernel")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def save_traffic_figure(path, traffic_by_mode: dict, label: str) -> str:
    """Grouped bars of access counters, one group per counter field."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    modes = list(traffic_by_mode)
    fields = ["ifmap_reads", "ifmap_rereads", "weight_reads",
              "ofmap_writes", "psum_reads", "psum_writes"]
    width = 0.8 / max(1, len(modes))
    colors = ["#3b6ea5", "#a54242", "#55813b", "#8a6d3b"]
    for i, mode in enumerate(modes):
        counters = traffic_by_mode[mode]
        xs = [j + i * width for j in range(len(fields))]
        ys = [counters.get(f, 0) for f in fields]
        ax.bar(xs, ys, width=width, label=mode,
               color=colors[i % len(colors)])
    ax.set_xticks([j + width * (len(modes) - 1) / 2
                   for j in range(len(fields))])
    ax.set_xticklabels(fields, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("accesses")
    ax.set_title(label)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
