"""Figure rendering for evaluation artifacts (headless Agg backend).

Figures are written next to the delimited reports: score distributions with
threshold markers for evaluation runs, and score-versus-magnitude curves for
deformity sweeps.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .calibration import ThresholdSet

__all__ = ["save_score_distributions", "save_sweep_curves"]

_SCORES = (("convexity", "convexity"), ("simplicity", "simplicity"))


def save_sweep_curves(rows, path: str | Path, title: str = "deformity sweep") -> None:
    """Plot convexity and simplicity against deformity magnitude."""
    magnitudes = [row[0] for row in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(magnitudes, [row[1] for row in rows], marker="o", label="convexity")
    ax.plot(magnitudes, [row[2] for row in rows], marker="s", label="simplicity")
    ax.set_xlabel("deformity magnitude (px)")
    ax.set_ylabel("score")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_score_distributions(results, thresholds: ThresholdSet, path: str | Path) -> None:
    """Histogram both plausibility scores per structure, with threshold lines."""
    values: dict[str, dict[str, list[float]]] = {}
    for result in results:
        for record in result.records:
            if record.error is not None:
                continue
            per_metric = values.setdefault(record.structure, {})
            for metric, _ in _SCORES:
                value = getattr(record, metric)
                if value is not None:
                    per_metric.setdefault(metric, []).append(value)
    structures = sorted(values)
    if not structures:
        raise ValueError("no records with plausibility scores to plot")

    fig, axes = plt.subplots(
        nrows=len(structures), ncols=2, figsize=(9.0, 3.0 * len(structures)), squeeze=False
    )
    for row, structure in enumerate(structures):
        limits = thresholds.structures.get(structure)
        for col, (metric, label) in enumerate(_SCORES):
            ax = axes[row][col]
            series = values[structure].get(metric, [])
            ax.hist(series, bins=30, color="tab:blue", alpha=0.8)
            if limits is not None:
                threshold = limits.min_convexity if metric == "convexity" else limits.min_simplicity
                ax.axvline(threshold, color="tab:red", linestyle="--", label=f"min = {threshold:g}")
                ax.legend(fontsize="small")
            ax.set_title(f"{structure} {label}")
            ax.set_xlabel(label)
            ax.set_ylabel("images")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
