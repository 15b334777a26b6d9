"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "mvpose",
}
GOLDEN = (5**0.5 - 1) / 2


def _figure(width=4.5):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    return fig, ax


def _save(fig, path):
    # no software/date metadata, so identical data gives identical bytes
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def convergence_figure(rows, path) -> None:
    """Bar chart of mean final loss per frame count with one-stddev error bars."""
    rows = list(rows)
    n = [r[0] for r in rows]
    mean = np.array([r[1] for r in rows])
    std = np.array([r[2] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.bar(n, mean, yerr=std, capsize=3, color="#4c72b0", edgecolor="black", linewidth=0.5)
        ax.set_xticks(n)
        ax.set_xlabel("frames used for refinement")
        ax.set_ylabel("final loss (held-out views)")
        ax.set_ylim(bottom=0)
        fig.tight_layout()
        _save(fig, path)


def recovery_figure(records, path, threshold_deg: float = 2.0) -> None:
    """Histogram of final rotation errors, log-spaced bins, success threshold marked."""
    err = np.array([r["final_rot_deg"] for r in records], dtype=float)
    lo = max(min(err.min(), threshold_deg) / 2, 1e-3)
    hi = max(err.max(), threshold_deg) * 2
    bins = np.geomspace(lo, hi, 25)
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.hist(np.clip(err, lo, hi), bins=bins, color="#55a868", edgecolor="black", linewidth=0.5)
        ax.axvline(threshold_deg, color="#c44e52", linestyle="--", linewidth=1)
        ax.set_xscale("log")
        ax.set_xlabel("final rotation error (deg)")
        ax.set_ylabel("trials")
        fig.tight_layout()
        _save(fig, path)


def loss_trace_figure(trace, path) -> None:
    trace = np.asarray(trace, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.plot(np.arange(len(trace)), trace, color="#4c72b0", linewidth=1)
        ax.plot(np.arange(len(trace)), np.minimum.accumulate(trace), color="black", linewidth=0.8, linestyle=":")
        if np.all(trace > 0):
            ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("multi-view loss")
        fig.tight_layout()
        _save(fig, path)
