"""File-only plot emission (no interactive backends)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_roc(fpr, tpr, auc: float, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr, label=f"AUC = {auc:.3f}")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend()
    _save(fig, path)


def plot_learning_curves(runs: dict, path) -> None:
    """runs: label -> list of per-seed record lists."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for label, seed_records in runs.items():
        iters = [r["iteration"] for r in seed_records[0]]
        rewards = np.array([[r["avg_reward"] for r in recs] for recs in seed_records])
        costs = np.array([[r["avg_cost"] for r in recs] for recs in seed_records])
        for ax, data in zip(axes, (rewards, costs)):
            mean, std = data.mean(axis=0), data.std(axis=0)
            ax.plot(iters, mean, label=label)
            ax.fill_between(iters, mean - std, mean + std, alpha=0.2)
    axes[0].set_ylabel("avg episodic reward")
    axes[1].set_ylabel("avg episodic cost")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.legend()
    _save(fig, path)


def plot_pareto(points, front, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    modes = sorted({p.mode for p in points})
    for mode in modes:
        xs = [p.avg_cost for p in points if p.mode == mode]
        ys = [p.avg_reward for p in points if p.mode == mode]
        ax.scatter(xs, ys, s=18, alpha=0.6, label=mode)
    fxs = sorted([(p.avg_cost, p.avg_reward) for p in front])
    if fxs:
        ax.plot([x for x, _ in fxs], [y for _, y in fxs], "k*-", ms=10, label="frontier")
    ax.set_xlabel("avg episodic cost")
    ax.set_ylabel("avg episodic reward")
    ax.legend()
    _save(fig, path)


def plot_heatmap(rows, text: str, path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(rows)), 1.8))
    costs = np.array([[r["c_hat"] for r in rows]])
    im = ax.imshow(costs, aspect="auto", cmap="Reds", vmin=0, vmax=1)
    ax.set_yticks([])
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(
        [r["event"][0].upper() if r["event"] != "floor" else "." for r in rows]
    )
    ax.set_title(text, fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.05)
    _save(fig, path)
