"""Slot-occupancy timeline rendering for exported traces."""

from __future__ import annotations

from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")  # headless; file output only
matplotlib.rcParams["svg.hashsalt"] = "ttstn"  # reproducible SVG ids

import matplotlib.pyplot as plt  # noqa: E402

from .bus import KIND_AMBIGUOUS, KIND_COLLISION, KIND_DELIVERED, KIND_EXEC, KIND_FAULT, TraceRecord
from .timing import bit_time_ns

_KIND_COLORS = {
    KIND_DELIVERED: "#2f6f4f",
    KIND_AMBIGUOUS: "#c7a018",
    KIND_COLLISION: "#b03a2e",
    KIND_FAULT: "#8e44ad",
    KIND_EXEC: "#2e6fb0",
}


def _actor_order(records: Sequence[TraceRecord]) -> List[str]:
    actors = {r.actor for r in records}
    ordered = []
    if "M" in actors:
        ordered.append("M")
    ordered.extend(sorted((a for a in actors if a not in ("M", "-")),
                          key=lambda a: (len(a), a)))
    if "-" in actors:
        ordered.append("-")
    return ordered


def plot_trace(records: Sequence[TraceRecord], baud: int, sink) -> None:
    """Render one lane per actor; each byte a bar over its wire span."""
    actors = _actor_order(records)
    lanes = {actor: i for i, actor in enumerate(actors)}
    frame_ms = 10 * bit_time_ns(baud) / 1e6

    fig, ax = plt.subplots(figsize=(11, 1.2 + 0.45 * max(len(actors), 1)))
    seen_kinds = []
    for r in records:
        y = lanes[r.actor]
        color = _KIND_COLORS.get(r.kind, "#555555")
        ax.broken_barh([(r.time_ns / 1e6, frame_ms)], (y - 0.35, 0.7),
                       facecolors=color, edgecolor="none")
        if r.kind not in seen_kinds:
            seen_kinds.append(r.kind)

    ax.set_yticks(range(len(actors)))
    ax.set_yticklabels(actors)
    ax.set_ylim(-0.8, len(actors) - 0.2)
    ax.invert_yaxis()
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("actor")
    ax.set_title("bus slot occupancy")
    ax.grid(axis="x", linewidth=0.3, alpha=0.5)
    handles = [plt.Rectangle((0, 0), 1, 1, color=_KIND_COLORS.get(k, "#555555"))
               for k in seen_kinds]
    if handles:
        ax.legend(handles, seen_kinds, loc="upper right", fontsize="small",
                  ncols=min(len(seen_kinds), 5))
    fig.tight_layout()
    fig.savefig(sink, format="svg", metadata={"Date": None})
    plt.close(fig)
