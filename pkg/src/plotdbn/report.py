"""Figure and delimited-output rendering for the CLI report path.

Every renderer writes a PNG next to a CSV carrying the same numbers, so a
report directory is both human-readable and machine-consumable.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _ensure(directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_phase_timeline(directory: str | Path, phase_labels: Sequence[str],
                         marginals: np.ndarray, *, stem: str = "phases",
                         title: str = "Phase posterior over time") -> tuple[Path, Path]:
    """Stacked per-phase probabilities over time: CSV plus a PNG figure.

    ``marginals`` has one row per time step, columns in phase order; row t is
    interpreted as the posterior at time index t.
    """
    directory = _ensure(directory)
    marginals = np.asarray(marginals, dtype=float)
    csv_path = directory / f"{stem}.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", *phase_labels])
        for t, row in enumerate(marginals):
            writer.writerow([t, *[f"{p:.12g}" for p in row]])

    fig, ax = plt.subplots(figsize=(8, 4))
    steps = np.arange(len(marginals))
    ax.stackplot(steps, marginals.T, labels=list(phase_labels), alpha=0.85)
    ax.set_xlabel("time step")
    ax.set_ylabel("probability")
    ax.set_ylim(0, 1)
    ax.set_xlim(steps[0], max(steps[-1], 1))
    ax.set_title(title)
    ax.legend(loc="center left", bbox_to_anchor=(1.0, 0.5), fontsize=8)
    fig.tight_layout()
    png_path = directory / f"{stem}.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return csv_path, png_path


def write_decision_scores(directory: str | Path, scores: Sequence[tuple[str, float]],
                          *, stem: str = "scores") -> tuple[Path, Path]:
    """Ranked decision scores: CSV plus a horizontal bar chart."""
    directory = _ensure(directory)
    csv_path = directory / f"{stem}.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "decision", "score"])
        for rank, (decision_id, score) in enumerate(scores, start=1):
            writer.writerow([rank, decision_id, f"{score:.12g}"])

    fig, ax = plt.subplots(figsize=(7, 0.6 * max(len(scores), 2) + 1.2))
    names = [d for d, _ in scores][::-1]
    values = [s for _, s in scores][::-1]
    ax.barh(names, values, color="#3b6ea5")
    ax.set_xlabel("expected utility")
    ax.set_title("Decision ranking")
    fig.tight_layout()
    png_path = directory / f"{stem}.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return csv_path, png_path


def write_task_heatmap(directory: str | Path, task_names: Sequence[str],
                       active_marginals: np.ndarray, *, stem: str = "tasks"
                       ) -> tuple[Path, Path]:
    """Per-task activity probabilities over time as CSV plus a heatmap."""
    directory = _ensure(directory)
    active_marginals = np.asarray(active_marginals, dtype=float)
    csv_path = directory / f"{stem}.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", *task_names])
        for t, row in enumerate(active_marginals):
            writer.writerow([t, *[f"{p:.12g}" for p in row]])

    fig, ax = plt.subplots(figsize=(8, 0.5 * max(len(task_names), 2) + 1.5))
    image = ax.imshow(active_marginals.T, aspect="auto", origin="lower",
                      vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_yticks(range(len(task_names)), labels=task_names, fontsize=8)
    ax.set_xlabel("time step")
    ax.set_title("P(task active)")
    fig.colorbar(image, ax=ax, shrink=0.9)
    fig.tight_layout()
    png_path = directory / f"{stem}.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return csv_path, png_path
