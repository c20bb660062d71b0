"""Figure rendering for run artifacts (headless Agg backend).

Each function draws one figure from already-computed data and writes it to
a file; nothing here recomputes metrics.  Figures accompany the text
reports so a run directory is inspectable at a glance.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def roc_overlay(curves: dict[str, np.ndarray], path: str, title: str = "ROC") -> None:
    """All units' ROC curves on one axes, with the chance diagonal."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    for name, pts in curves.items():
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], lw=1.0, alpha=0.7, label=name)
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    if len(curves) <= 12:
        ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pr_overlay(curves: dict[str, np.ndarray], path: str, title: str = "PR") -> None:
    """All units' precision-recall curves on one axes."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    for name, pts in curves.items():
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], lw=1.0, alpha=0.7, label=name)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    if len(curves) <= 12:
        ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loss_curves(traces: dict[str, list[float]], path: str, title: str = "training loss") -> None:
    """Per-epoch loss traces, one line per unit."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, trace in traces.items():
        ax.plot(range(1, len(trace) + 1), trace, lw=1.0, alpha=0.8, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title(title)
    if len(traces) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def lambda_curve(
    lambdas: list[float], aurocs: list[float], auprcs: list[float], path: str
) -> None:
    """Metric trends as the retained-positive fraction grows."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(lambdas, aurocs, marker="o", label="AUROC")
    ax.plot(lambdas, auprcs, marker="s", label="AUPRC")
    ax.set_xlabel("retained fraction of train positives")
    ax.set_ylabel("metric")
    ax.set_ylim(0.0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_heatmap(
    d0_values: list[int],
    temperatures: list[float],
    surface: np.ndarray,
    path: str,
    metric: str = "AUROC",
) -> None:
    """Metric surface over (prototype extent, temperature)."""
    surface = np.asarray(surface)
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(temperatures), 1.2 + 0.7 * len(d0_values)))
    im = ax.imshow(surface, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(temperatures)), [f"{t:g}" for t in temperatures])
    ax.set_yticks(range(len(d0_values)), [str(d) for d in d0_values])
    ax.set_xlabel("temperature")
    ax.set_ylabel("prototype extent")
    for a in range(surface.shape[0]):
        for b in range(surface.shape[1]):
            ax.text(
                b, a, f"{surface[a, b]:.3f}", ha="center", va="center",
                color="white", fontsize=7,
            )
    fig.colorbar(im, ax=ax, label=metric)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ranking_bar(ranked: list[tuple[int, str, float]], path: str, title: str) -> None:
    """Horizontal bars of candidate scores, best at the top."""
    names = [f"{drug_id} (#{idx})" for idx, drug_id, _ in ranked]
    scores = [score for _, _, score in ranked]
    fig, ax = plt.subplots(figsize=(5, 0.6 + 0.35 * len(ranked)))
    ypos = np.arange(len(ranked))[::-1]
    ax.barh(ypos, scores, color="steelblue")
    ax.set_yticks(ypos, names, fontsize=8)
    ax.set_xlabel("predicted score")
    ax.set_xlim(0.0, 1.0)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
