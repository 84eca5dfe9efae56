"""Figures written next to the CSV reports (Agg backend, PNG output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
    "svg.hashsalt": "gatedreduce",
}


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_phases(reports, path, title="Accuracy by training phase"):
    """Grouped bars of train / test accuracy for phases 1-3."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        phases = [r["phase"] for r in reports]
        x = np.arange(len(phases))
        width = 0.38
        train = [r["train_acc"] for r in reports]
        test = [r["test_acc"] if r["test_acc"] is not None else np.nan for r in reports]
        ax.bar(x - width / 2, train, width, label="train", color="#4c72b0")
        ax.bar(x + width / 2, test, width, label="test", color="#dd8452")
        for xi, v in zip(x + width / 2, test):
            if np.isfinite(v):
                ax.annotate(f"{v:.3f}", (xi, v), ha="center", va="bottom", fontsize=7)
        ax.set_xticks(x, [str(p) for p in phases])
        ax.set_xlabel("training phase")
        ax.set_ylabel("Acc")
        lo = np.nanmin(train + test)
        ax.set_ylim(max(0.0, lo - 0.1), 1.0)
        ax.set_title(title)
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_policy_history(reports, path):
    """Mean reward and kept fraction per epoch across phases 2 and 3."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.2))
        offset = 0
        for r in reports:
            rewards = r["history"].get("mean_reward", [])
            kept = r["history"].get("kept_fraction", [])
            if not rewards:
                continue
            ep = np.arange(offset, offset + len(rewards)) + 1
            ax1.plot(ep, rewards, label=f"phase {r['phase']}")
            ax2.plot(ep, kept, label=f"phase {r['phase']}")
            offset += len(rewards)
        ax1.set_ylabel("mean reward")
        ax2.set_ylabel("kept fraction")
        ax2.set_xlabel("policy epoch")
        ax2.set_ylim(0, 1)
        if offset:
            ax1.legend()
        _save(fig, path)


def plot_runs(rows, path, label="fold"):
    """Per-fold (or per-run) accuracy with the mean as a dashed line."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        accs = [r["metrics"]["overall_acc"] for r in rows]
        idx = [r["index"] + 1 for r in rows]
        ax.bar(idx, accs, color="#55a868")
        mean = float(np.mean(accs))
        ax.axhline(mean, ls="--", color="k", lw=1, label=f"mean {mean:.4f}")
        ax.set_xticks(idx)
        ax.set_xlabel(label)
        ax.set_ylabel("Acc")
        ax.set_ylim(max(0.0, min(accs) - 0.1), 1.0)
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_discard_proportions(names, proportions, threshold, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(5.0, 0.45 * len(names)), 3.2))
        x = np.arange(len(names))
        colors = ["#c44e52" if p > threshold else "#4c72b0" for p in proportions]
        ax.bar(x, proportions, color=colors)
        ax.axhline(threshold, ls="--", color="k", lw=1)
        ax.set_xticks(x, names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("discard proportion")
        ax.set_ylim(0, 1)
        _save(fig, path)
