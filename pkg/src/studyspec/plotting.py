"""Figures written next to the CLI's delimited reports.

Everything renders through the non-interactive Agg backend into files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    # keep files reproducible
    "svg.hashsalt": "studyspec",
}


def _save(fig, path) -> None:
    metadata = {"Software": None} if str(path).lower().endswith(".png") else None
    fig.savefig(path, metadata=metadata)
    plt.close(fig)


def plot_staircase_runs(runs, path, observer_jnd: float | None = None, max_tracks: int = 20) -> None:
    """Difference tracks of the first runs and the distribution of JND estimates."""
    with plt.rc_context(RC):
        fig, (ax_track, ax_hist) = plt.subplots(1, 2, figsize=(8, 3))
        for run in runs[:max_tracks]:
            ax_track.plot(range(1, len(run.diffs) + 1), run.diffs, lw=0.8, alpha=0.6)
        ax_track.set_xlabel("regular trial")
        ax_track.set_ylabel("correlation difference")
        ax_track.set_title("staircase tracks")
        estimates = np.array([r.jndEstimate for r in runs], dtype=float)
        estimates = estimates[np.isfinite(estimates)]
        if estimates.size:
            ax_hist.hist(estimates, bins=20, color="0.6", edgecolor="white")
            ax_hist.axvline(estimates.mean(), color="k", lw=1, label=f"mean {estimates.mean():.3f}")
        if observer_jnd is not None:
            ax_hist.axvline(observer_jnd, color="tab:red", lw=1, ls="--", label=f"observer {observer_jnd:.3f}")
            ax_track.axhline(observer_jnd, color="tab:red", lw=1, ls="--")
        ax_hist.set_xlabel("JND estimate")
        ax_hist.set_ylabel("runs")
        ax_hist.legend(frameon=False)
        _save(fig, path)


def plot_balance(tables: dict[str, list[list[int]]], path) -> None:
    """Condition-by-position count heatmaps, one panel per block."""
    with plt.rc_context(RC):
        n = max(1, len(tables))
        fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3), squeeze=False)
        for ax, (block, table) in zip(axes[0], sorted(tables.items())):
            data = np.array(table, dtype=float) if table else np.zeros((1, 1))
            ax.imshow(data, cmap="Greys", vmin=0, vmax=max(1.0, data.max()))
            for (i, j), v in np.ndenumerate(data):
                ax.text(j, i, f"{int(v)}", ha="center", va="center",
                        color="white" if v > data.max() / 2 else "black")
            ax.set_xlabel("position")
            ax.set_ylabel("condition")
            ax.set_title(block)
        _save(fig, path)


def plot_dwell(reports: dict, path, threshold_ms: int | None = None) -> None:
    """Search and non-search dwell per item, summed over participants."""
    search: dict[str, int] = {}
    other: dict[str, int] = {}
    for report in reports.values():
        for item, d in report.items.items():
            search[item] = search.get(item, 0) + d.searchDwell
            other[item] = other.get(item, 0) + d.nonSearchDwell
    items = sorted(search)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(items) + 2), 3))
        x = np.arange(len(items))
        s = np.array([search[i] for i in items], dtype=float) / 1000
        o = np.array([other[i] for i in items], dtype=float) / 1000
        ax.bar(x, o, color="0.7", label="outside search")
        ax.bar(x, s, bottom=o, color="tab:blue", label="during search")
        ax.set_xticks(x, items, rotation=45, ha="right")
        ax.set_ylabel("dwell (s)")
        if threshold_ms is not None:
            ax.set_title(f"hover dwell per item (exclusion threshold {threshold_ms} ms)")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_timeline(timeline, path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(8, 0.3 * max(3, len(timeline.intervals)) + 1))
        origin = timeline.intervals[0].start if timeline.intervals else 0
        for row, iv in enumerate(timeline.intervals):
            ax.broken_barh([((iv.start - origin) / 1000, iv.duration / 1000)], (row - 0.4, 0.8), color="0.5")
        ax.set_yticks(range(len(timeline.intervals)), [iv.instanceId for iv in timeline.intervals])
        ax.invert_yaxis()
        ax.set_xlabel("time since first component (s)")
        _save(fig, path)
