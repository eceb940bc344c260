"""Cohort aggregation and report rendering.

The aggregate mirrors a screening table: per-structure mean and population
standard deviation of every metric, plus counts and integer percentages of
geometrical outliers, anatomical outliers, and their intersection.
Percentages are rounded half-up in exact integer arithmetic, so 1 outlier in
10 reads "1 (10%)" and 95 in 2000 reads "95 (5%)".

Results are reduced in one canonical order (sorted by image id) so the same
cohort always renders byte-identically, no matter how the evaluation was
parallelized.  ``csv`` and ``json`` carry full float precision; ``md`` is a
human-readable table at three decimals.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .calibration import EmptyCohortError, OutlierVerdict, Reason
from .metrics import MetricRecord

__all__ = [
    "FORMATS",
    "ImageResult",
    "MetricStats",
    "OutlierStats",
    "CohortSummary",
    "aggregate",
    "records_from_json",
    "records_to_csv",
    "records_to_json",
    "render",
]

FORMATS = ("csv", "json", "md")

_METRIC_FIELDS = ("convexity", "simplicity", "dice", "mad_mm", "hausdorff_mm")
_MD_METRIC_LABELS = {
    "convexity": "Cx",
    "simplicity": "Sp",
    "dice": "Dice",
    "mad_mm": "MAD (mm)",
    "hausdorff_mm": "HD (mm)",
}
_OUTLIER_KINDS = ("geometrical", "anatomical", "both")
_MD_OUTLIER_LABELS = {"geometrical": "geo", "anatomical": "ana", "both": "geo ∩ ana"}


@dataclass(frozen=True)
class ImageResult:
    """Evaluation outcome of one image: its records and its outlier verdict.

    ``error`` is set when the whole image failed (unreadable file, mismatched
    grids); such images carry no usable records and count as anatomical
    outliers.  ``tags`` are caller-supplied annotations carried through
    untouched.
    """

    image_id: str
    records: tuple[MetricRecord, ...]
    verdict: OutlierVerdict
    tags: tuple[str, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class MetricStats:
    """Mean and population standard deviation over ``count`` values."""

    mean: float
    std: float
    count: int


@dataclass(frozen=True)
class OutlierStats:
    """Outlier count plus its half-up-rounded integer percentage."""

    count: int
    percent: int


@dataclass(frozen=True)
class CohortSummary:
    """Aggregated metrics and outlier counts of one evaluated cohort."""

    label: str
    cohort_size: int
    structures: dict[str, dict[str, MetricStats]]
    outliers: dict[str, OutlierStats]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "cohort_size": self.cohort_size,
            "structures": {
                structure: {metric: asdict(stats) for metric, stats in metric_stats.items()}
                for structure, metric_stats in self.structures.items()
            },
            "outliers": {kind: asdict(stats) for kind, stats in self.outliers.items()},
        }


def aggregate(results, label: str = "cohort") -> CohortSummary:
    """Reduce per-image results to cohort statistics.

    Metric moments skip records that carry an evaluation error or a missing
    value; outlier counts come from the verdicts, so failed images still
    count as anatomical outliers.
    """
    ordered = sorted(results, key=lambda result: result.image_id)
    if not ordered:
        raise EmptyCohortError("cannot aggregate an empty cohort")

    values: dict[str, dict[str, list[float]]] = {}
    for result in ordered:
        for record in result.records:
            if record.error is not None:
                continue
            per_metric = values.setdefault(record.structure, {})
            for metric in _METRIC_FIELDS:
                value = getattr(record, metric)
                if value is not None:
                    per_metric.setdefault(metric, []).append(float(value))

    structures = {
        structure: {
            metric: MetricStats(
                mean=float(np.mean(series)),
                std=float(np.std(series)),
                count=len(series),
            )
            for metric, series in per_metric.items()
        }
        for structure, per_metric in sorted(values.items())
    }

    size = len(ordered)
    counts = {
        "geometrical": sum(1 for r in ordered if r.verdict.geometrical),
        "anatomical": sum(1 for r in ordered if r.verdict.anatomical),
        "both": sum(1 for r in ordered if r.verdict.both),
    }
    outliers = {
        kind: OutlierStats(count=count, percent=_percent_half_up(count, size))
        for kind, count in counts.items()
    }
    return CohortSummary(label=label, cohort_size=size, structures=structures, outliers=outliers)


def render(summary: CohortSummary, fmt: str) -> str:
    """Render a summary as ``csv``, ``json``, or ``md`` text."""
    if fmt == "csv":
        return _render_csv(summary)
    if fmt == "json":
        return json.dumps(summary.to_dict(), indent=2) + "\n"
    if fmt == "md":
        return _render_md(summary)
    raise ValueError(f"unknown report format {fmt!r}, expected one of {FORMATS}")


def _percent_half_up(count: int, size: int) -> int:
    """Integer percentage rounded half away from zero, in exact arithmetic."""
    return (200 * count + size) // (2 * size)


def _render_csv(summary: CohortSummary) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["section", "structure", "metric", "mean", "std", "count", "percent"])
    writer.writerow(["cohort", "", "size", "", "", summary.cohort_size, ""])
    for structure in sorted(summary.structures):
        for metric in _METRIC_FIELDS:
            stats = summary.structures[structure].get(metric)
            if stats is None:
                continue
            writer.writerow(
                ["metrics", structure, metric, repr(stats.mean), repr(stats.std), stats.count, ""]
            )
    for kind in _OUTLIER_KINDS:
        stats = summary.outliers[kind]
        writer.writerow(["outliers", "", kind, "", "", stats.count, stats.percent])
    return buffer.getvalue()


def _render_md(summary: CohortSummary) -> str:
    structures = sorted(summary.structures)
    metrics_present = [
        metric
        for metric in _METRIC_FIELDS
        if any(metric in summary.structures[s] for s in structures)
    ]
    header = ["cohort"]
    for structure in structures:
        for metric in metrics_present:
            if metric in summary.structures[structure]:
                header.append(f"{structure} {_MD_METRIC_LABELS[metric]}")
    header += [_MD_OUTLIER_LABELS[kind] for kind in _OUTLIER_KINDS]

    row = [f"{summary.label} (n={summary.cohort_size})"]
    for structure in structures:
        for metric in metrics_present:
            stats = summary.structures[structure].get(metric)
            if stats is not None:
                row.append(f"{stats.mean:.3f} ± {stats.std:.3f}")
    for kind in _OUTLIER_KINDS:
        stats = summary.outliers[kind]
        row.append(f"{stats.count} ({stats.percent}%)")

    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join([" --- "] * len(header)) + "|",
        "| " + " | ".join(row) + " |",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# per-image record serialization
# ---------------------------------------------------------------------------

def records_to_csv(results) -> str:
    """Flatten results to one CSV row per (image, structure), full precision."""
    ordered = sorted(results, key=lambda result: result.image_id)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "image_id", "tags", "structure", "convexity", "simplicity", "dice",
            "mad_mm", "hausdorff_mm", "component_count", "flags", "record_error",
            "anatomical_outlier", "geometrical_outlier", "image_error",
        ]
    )

    def fmt(value) -> str:
        return "" if value is None else repr(float(value))

    for result in ordered:
        common = [
            result.image_id,
            "|".join(result.tags),
        ]
        verdict_cols = [
            str(result.verdict.anatomical).lower(),
            str(result.verdict.geometrical).lower(),
            result.error or "",
        ]
        if not result.records:
            writer.writerow(common + [""] * 9 + verdict_cols)
            continue
        for record in result.records:
            writer.writerow(
                common
                + [
                    record.structure,
                    fmt(record.convexity),
                    fmt(record.simplicity),
                    fmt(record.dice),
                    fmt(record.mad_mm),
                    fmt(record.hausdorff_mm),
                    str(record.component_count),
                    "|".join(record.flags),
                    record.error or "",
                ]
                + verdict_cols
            )
    return buffer.getvalue()


def records_to_json(results) -> str:
    """Serialize results losslessly (floats survive a round-trip exactly)."""
    ordered = sorted(results, key=lambda result: result.image_id)
    payload = {
        "results": [
            {
                "image_id": result.image_id,
                "tags": list(result.tags),
                "error": result.error,
                "records": [asdict(record) | {"flags": list(record.flags)} for record in result.records],
                "verdict": {
                    "anatomical": result.verdict.anatomical,
                    "geometrical": result.verdict.geometrical,
                    "reasons": [asdict(reason) for reason in result.verdict.reasons],
                },
            }
            for result in ordered
        ]
    }
    return json.dumps(payload, indent=2) + "\n"


def records_from_json(text: str) -> list[ImageResult]:
    """Parse results written by :func:`records_to_json`."""
    payload = json.loads(text)
    results = []
    for entry in payload["results"]:
        records = tuple(
            MetricRecord(
                structure=r["structure"],
                convexity=r["convexity"],
                simplicity=r["simplicity"],
                dice=r["dice"],
                mad_mm=r["mad_mm"],
                hausdorff_mm=r["hausdorff_mm"],
                component_count=r["component_count"],
                flags=tuple(r["flags"]),
                error=r["error"],
            )
            for r in entry["records"]
        )
        verdict = OutlierVerdict(
            anatomical=entry["verdict"]["anatomical"],
            geometrical=entry["verdict"]["geometrical"],
            reasons=tuple(Reason(**reason) for reason in entry["verdict"]["reasons"]),
        )
        results.append(
            ImageResult(
                image_id=entry["image_id"],
                records=records,
                verdict=verdict,
                tags=tuple(entry["tags"]),
                error=entry["error"],
            )
        )
    return results
