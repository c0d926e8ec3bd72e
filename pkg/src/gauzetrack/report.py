"""Figure rendering for replay and bench reports.

Figures are written to files next to the machine-readable outputs; rendering
uses the Agg backend so it works headless.
"""

from __future__ import annotations

from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bench import BenchReport
from .ledger import EventKind, LedgerEvent

_COUNT_KINDS = {
    EventKind.COMMIT,
    EventKind.UNATTENDED_COMMIT,
    EventKind.MANUAL_ADJUSTMENT,
    EventKind.SESSION_START,
    EventKind.SESSION_END,
}


def render_ledger_timeline(events: Sequence[LedgerEvent], path) -> None:
    """Step plot of Total In / Total Out / In Play over session time."""
    rows = [e for e in events if e.kind in _COUNT_KINDS]
    if not rows:
        rows = list(events)
    t = [e.timestamp_ms / 1000.0 for e in rows]
    total_in = [e.total_in for e in rows]
    total_out = [e.total_out for e in rows]
    in_play = [e.total_in - e.total_out for e in rows]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.step(t, total_in, where="post", label="Total In", color="tab:blue")
    ax.step(t, total_out, where="post", label="Total Out", color="tab:orange")
    ax.step(t, in_play, where="post", label="In Play", color="tab:red", linewidth=2)
    warnings = [e for e in events if e.kind == EventKind.WARNING]
    if warnings:
        ax.scatter(
            [e.timestamp_ms / 1000.0 for e in warnings],
            [e.total_in - e.total_out for e in warnings],
            marker="x", color="black", zorder=5, label="Warning",
        )
    ax.set_xlabel("session time (s)")
    ax.set_ylabel("gauze count")
    ax.set_title("Session ledger timeline")
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench_latency(report: BenchReport, path) -> None:
    """Per-stream latency histogram with p99 markers and achieved FPS."""
    streams = list(report.streams.items())
    fig, axes = plt.subplots(1, len(streams), figsize=(5 * len(streams), 4), squeeze=False)
    for ax, (camera, stats) in zip(axes[0], streams):
        ax.hist(stats.latencies_ms, bins=60, color="tab:blue", alpha=0.8)
        p99 = stats.percentile_ms(99)
        ax.axvline(p99, color="tab:red", linestyle="--", label=f"p99 = {p99:.3f} ms")
        ax.set_xlabel("per-frame latency (ms)")
        ax.set_ylabel("frames")
        ax.set_title(f"{camera.value} stream: {stats.fps:.0f} FPS")
        ax.set_yscale("log")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
