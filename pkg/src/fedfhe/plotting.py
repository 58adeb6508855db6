"""Figure rendering for the report command.

Headless-safe: the Agg backend is forced before pyplot loads, so
figures render to files on machines without a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_accuracy_figure(report: dict, path) -> None:
    """Per-repeat accuracies with the mean line for one run."""
    accs = np.asarray(report["per_repeat"], float)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(np.arange(1, len(accs) + 1), accs, "o-", color="#2d6a9f",
            markersize=4, linewidth=1.0, label="repeat accuracy")
    ax.axhline(report["accuracy"], color="#b5442d", linewidth=1.2,
               linestyle="--",
               label=f"mean {report['accuracy']:.4f}")
    ax.set_xlabel("repeat")
    ax.set_ylabel("test accuracy")
    ax.set_title(f"{report['dataset']} / {report['model']} "
                 f"({report['mode']}, {report['repeats']} repeats)")
    ax.set_ylim(max(0.0, accs.min() - 0.05), min(1.0, accs.max() + 0.05))
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_inference_figure(rows: list, path) -> None:
    """Grouped per-sample byte costs for the two inference protocols."""
    rows = sorted(rows, key=lambda r: (r["depth"], r["trees"]))
    labels = [f"d{r['depth']}/t{r['trees']}" for r in rows]
    samples = [max(1, r.get("samples", 1)) for r in rows]
    classic = [r["classic_bytes"] / s for r, s in zip(rows, samples)]
    psi = [r["psi_bytes"] / s for r, s in zip(rows, samples)]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(rows)), 3.8))
    ax.bar(x - 0.2, classic, width=0.4, color="#8a8a8a",
           label="node-by-node")
    ax.bar(x + 0.2, psi, width=0.4, color="#2d6a9f",
           label="intersection-based")
    ax.set_xticks(x, labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("bytes per sample")
    ax.set_title("inference wire cost by depth/trees")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
