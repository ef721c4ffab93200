"""Report figures. Uses the non-interactive Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"dp": "C0", "gc": "C1", "dseam-opt": "C2", "dseam-net": "C3"}


def plot_quality_sweep(summaries, path) -> None:
    """Mean seam quality against patch size, one line per method."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for s in summaries:
        ns = sorted(s.mean_q)
        ax.plot(ns, [s.mean_q[n] for n in ns], marker="o", ms=3, label=s.method,
                color=_STYLE.get(s.method))
    ax.set_xlabel("patch size N")
    ax.set_ylabel("mean Q_seam (lower is better)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_timing(summaries, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    names = [s.method for s in summaries]
    ax.bar(names, [s.median_time_s for s in summaries], color=[_STYLE.get(n, "C7") for n in names])
    ax.set_ylabel("median time per pair (s)")
    ax.set_yscale("log")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_loss_curve(totals, path, window: int = 50) -> None:
    import numpy as np

    t = np.asarray(totals, float)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.plot(t, lw=0.6, alpha=0.5, label="per iteration")
    if t.size >= window:
        ax.plot(np.arange(window - 1, t.size), np.convolve(t, np.ones(window) / window, "valid"),
                lw=1.5, label=f"{window}-iteration mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("total loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
