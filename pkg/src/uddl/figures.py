"""Figure rendering for reports and fit traces.

Report commands drop PNG files next to the delimited output: a per-method
accuracy chart (mean bar with a std whisker plus the individual trial
points) and, when a fit trace is available, the objective curve. Rendering
is headless (Agg) and never touches the report bytes, so figures can be
disabled without changing any other output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ksvd import FitReport
from .report import TrialReport


def render_accuracy_figure(report: TrialReport, path) -> Path:
    """Bar chart of mean accuracy per method with trial scatter overlay."""
    path = Path(path)
    methods = report.methods
    means = [report.mean(m) for m in methods]
    stds = [report.std(m) for m in methods]
    pos = np.arange(len(methods))

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(methods), 4.0))
    ax.bar(pos, means, yerr=stds, capsize=4, width=0.6, color="#4878a8", alpha=0.85, zorder=2)
    for i, method in enumerate(methods):
        trials = report.trial_accuracies[method]
        jitter = np.linspace(-0.18, 0.18, num=len(trials)) if len(trials) > 1 else np.zeros(1)
        ax.plot(pos[i] + jitter, trials, "o", ms=4, color="#202020", zorder=3)
    ax.set_xticks(pos)
    ax.set_xticklabels(methods)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(axis="y", alpha=0.3, zorder=0)
    ax.set_title("recognition accuracy over trials")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_objective_figure(report: FitReport, path) -> Path:
    """Objective trace of a dictionary fit (after coding and after sweep)."""
    path = Path(path)
    iters = np.arange(1, len(report.objective_per_iteration) + 1)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if report.objective_after_coding:
        ax.plot(iters, report.objective_after_coding, "o--", ms=3, label="after coding")
    ax.plot(iters, report.objective_per_iteration, "o-", ms=3, label="after atom sweep")
    ax.set_xlabel("iteration")
    ax.set_ylabel("squared reconstruction error")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend()
    ax.set_title("dictionary fit objective")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def figure_paths_for_report(report_path) -> dict[str, Path]:
    """Conventional figure locations next to a report file."""
    report_path = Path(report_path)
    stem = report_path.with_suffix("")
    return {
        "accuracy": stem.parent / (stem.name + "_accuracy.png"),
        "objective": stem.parent / (stem.name + "_objective.png"),
    }
