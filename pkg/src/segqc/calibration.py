"""Plausibility thresholds: calibration, persistence, and outlier classification.

Thresholds are per-structure minima of the two plausibility scores.  A
structure is anatomically implausible when either score is at or below its
threshold (boundary counts as implausible) or, optionally, when it splits
into several connected components.  An optional geometric rule flags images
whose Hausdorff distance to the reference exceeds a cap; it is disabled by
default because it needs a reference and a dataset-specific cap.

Calibrating against a cohort of expert annotations takes the per-structure
minimum of each score, so every expert mask passes its own thresholds.  The
shipped defaults were calibrated that way on expert echocardiography
annotations of the left ventricle.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataConsistencyError, InputFileError
from .metrics import MetricRecord

__all__ = [
    "EmptyCohortError",
    "GeometricRule",
    "MissingThresholdError",
    "OutlierVerdict",
    "Reason",
    "StructureThresholds",
    "ThresholdFileError",
    "ThresholdSet",
    "calibrate",
    "classify",
    "default_thresholds",
    "load_thresholds",
    "save_thresholds",
]


class ThresholdFileError(InputFileError):
    """A threshold file is malformed or holds unknown keys."""


class EmptyCohortError(DataConsistencyError):
    """Calibration got no usable records for a requested structure."""


class MissingThresholdError(DataConsistencyError):
    """Classification requires a threshold that the set does not provide."""


@dataclass(frozen=True)
class StructureThresholds:
    """Minimum plausible convexity and simplicity for one structure."""

    min_convexity: float
    min_simplicity: float

    def __post_init__(self) -> None:
        for name, value in (("min_convexity", self.min_convexity),
                            ("min_simplicity", self.min_simplicity)):
            if not (math.isfinite(value) and 0.0 < value <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {value}")


@dataclass(frozen=True)
class GeometricRule:
    """Optional reference-based outlier rule: Hausdorff distance above a cap."""

    enabled: bool = False
    hd_max_mm: float = 0.0

    def __post_init__(self) -> None:
        if self.enabled and not (math.isfinite(self.hd_max_mm) and self.hd_max_mm > 0.0):
            raise ValueError(f"an enabled geometric rule needs hd_max_mm > 0, got {self.hd_max_mm}")


@dataclass(frozen=True)
class ThresholdSet:
    """Per-structure plausibility thresholds plus cohort-wide rules.

    Structures absent from ``structures`` are metrics-only: they are scored
    but never gate the anatomical verdict.
    """

    structures: Mapping[str, StructureThresholds]
    geometric: GeometricRule = GeometricRule()
    multi_component_is_outlier: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "structures", dict(self.structures))


@dataclass(frozen=True)
class Reason:
    """One violated rule: which metric of which structure crossed which threshold."""

    structure: str
    metric: str
    value: float | None
    threshold: float | None


@dataclass(frozen=True)
class OutlierVerdict:
    """Outlier classification of one image.

    ``anatomical`` means at least one structure is implausible in isolation;
    ``geometrical`` means the reference-based rule fired.  ``reasons`` lists
    every violated (structure, metric, value, threshold) tuple.
    """

    anatomical: bool
    geometrical: bool
    reasons: tuple[Reason, ...] = ()

    @property
    def both(self) -> bool:
        return self.anatomical and self.geometrical


# Defaults calibrated on expert echocardiography annotations: per-structure
# minima of each plausibility score across the expert cohort.
_DEFAULT_STRUCTURES: dict[str, StructureThresholds] = {
    "lv_endo": StructureThresholds(min_convexity=0.741, min_simplicity=0.529),
    "lv_epi": StructureThresholds(min_convexity=0.960, min_simplicity=0.694),
}


def default_thresholds() -> ThresholdSet:
    """Shipped defaults: LV endocardium and epicardium minima, geometric rule
    disabled, multiple components counted as implausible."""
    return ThresholdSet(structures=dict(_DEFAULT_STRUCTURES))


def calibrate(
    records: Iterable[MetricRecord],
    structures: Sequence[str] | None = None,
    geometric: GeometricRule = GeometricRule(),
    multi_component_is_outlier: bool = True,
) -> ThresholdSet:
    """Derive thresholds from an expert cohort: per-structure score minima.

    Records with an evaluation error or missing scores are skipped.  When
    ``structures`` is given, every named structure must contribute at least
    one usable record; otherwise thresholds cover whatever structures appear.
    Raises :class:`EmptyCohortError` when a structure has no usable records.
    """
    grouped: dict[str, list[MetricRecord]] = defaultdict(list)
    for record in records:
        if record.error is None and record.convexity is not None and record.simplicity is not None:
            grouped[record.structure].append(record)

    wanted = list(structures) if structures is not None else sorted(grouped)
    calibrated: dict[str, StructureThresholds] = {}
    for structure in wanted:
        usable = grouped.get(structure, [])
        if not usable:
            raise EmptyCohortError(f"no usable records to calibrate structure {structure!r}")
        calibrated[structure] = StructureThresholds(
            min_convexity=min(r.convexity for r in usable),
            min_simplicity=min(r.simplicity for r in usable),
        )
    if not calibrated:
        raise EmptyCohortError("no usable records to calibrate any structure")
    return ThresholdSet(
        structures=calibrated,
        geometric=geometric,
        multi_component_is_outlier=multi_component_is_outlier,
    )


def classify(
    records: Iterable[MetricRecord],
    thresholds: ThresholdSet,
    require: Iterable[str] | None = None,
) -> OutlierVerdict:
    """Classify one image's records against a threshold set.

    A score at or below its threshold is a violation (the boundary counts as
    implausible).  Records carrying an evaluation error are anatomical
    outliers by definition.  Structures without thresholds are metrics-only
    and never gate the verdict, unless listed in ``require``, in which case a
    missing threshold raises :class:`MissingThresholdError`.
    """
    required = set(require) if require is not None else set()
    missing = required - set(thresholds.structures)
    if missing:
        raise MissingThresholdError(
            f"no thresholds for required structure(s): {', '.join(sorted(missing))}"
        )

    anatomical = False
    geometrical = False
    reasons: list[Reason] = []
    for record in records:
        if record.error is not None:
            anatomical = True
            reasons.append(Reason(record.structure, "evaluation_failure", None, None))
            continue

        limits = thresholds.structures.get(record.structure)
        if limits is not None:
            if record.convexity is None:
                # Degenerate hull: the score is undefined, which is itself
                # anatomically implausible.
                anatomical = True
                reasons.append(Reason(record.structure, "convexity", None, limits.min_convexity))
            elif record.convexity <= limits.min_convexity:
                anatomical = True
                reasons.append(
                    Reason(record.structure, "convexity", record.convexity, limits.min_convexity)
                )
            if record.simplicity is not None and record.simplicity <= limits.min_simplicity:
                anatomical = True
                reasons.append(
                    Reason(record.structure, "simplicity", record.simplicity, limits.min_simplicity)
                )
            if thresholds.multi_component_is_outlier and record.component_count > 1:
                anatomical = True
                reasons.append(
                    Reason(record.structure, "component_count", float(record.component_count), 1.0)
                )

        if (
            thresholds.geometric.enabled
            and record.hausdorff_mm is not None
            and record.hausdorff_mm > thresholds.geometric.hd_max_mm
        ):
            geometrical = True
            reasons.append(
                Reason(record.structure, "hausdorff_mm", record.hausdorff_mm,
                       thresholds.geometric.hd_max_mm)
            )

    return OutlierVerdict(anatomical=anatomical, geometrical=geometrical, reasons=tuple(reasons))


# ---------------------------------------------------------------------------
# threshold file format: plain "section.key = value" lines
# ---------------------------------------------------------------------------

_STRUCTURE_KEYS = ("min_convexity", "min_simplicity")
_KEY_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def save_thresholds(thresholds: ThresholdSet, path: str | Path) -> None:
    """Write a threshold set as plain ``name.key = value`` lines."""
    lines = ["# segqc thresholds: a score at or below its minimum marks an outlier"]
    for structure in sorted(thresholds.structures):
        limits = thresholds.structures[structure]
        lines.append(f"{structure}.min_convexity = {limits.min_convexity!r}")
        lines.append(f"{structure}.min_simplicity = {limits.min_simplicity!r}")
    lines.append(f"geometric.enabled = {str(thresholds.geometric.enabled).lower()}")
    if thresholds.geometric.hd_max_mm > 0.0:
        lines.append(f"geometric.hd_max_mm = {thresholds.geometric.hd_max_mm!r}")
    lines.append(
        "flags.multi_component_is_outlier = "
        f"{str(thresholds.multi_component_is_outlier).lower()}"
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_thresholds(path: str | Path) -> ThresholdSet:
    """Read a threshold set written by :func:`save_thresholds`.

    Unknown keys are rejected so typos cannot silently relax a rule.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise ThresholdFileError(f"{path}: cannot read: {exc}") from exc

    structure_values: dict[str, dict[str, float]] = defaultdict(dict)
    geometric_enabled = False
    geometric_hd = 0.0
    multi_component = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ThresholdFileError(f"{path}:{lineno}: expected 'name.key = value', got {line!r}")
        dotted, value_text = (part.strip() for part in line.split("=", 1))
        if dotted.count(".") != 1:
            raise ThresholdFileError(f"{path}:{lineno}: expected 'name.key = value', got {line!r}")
        section, key = dotted.split(".")
        if section == "geometric":
            if key == "enabled":
                geometric_enabled = _parse_bool(path, lineno, value_text)
            elif key == "hd_max_mm":
                geometric_hd = _parse_float(path, lineno, value_text)
            else:
                raise ThresholdFileError(f"{path}:{lineno}: unknown key geometric.{key}")
        elif section == "flags":
            if key == "multi_component_is_outlier":
                multi_component = _parse_bool(path, lineno, value_text)
            else:
                raise ThresholdFileError(f"{path}:{lineno}: unknown key flags.{key}")
        else:
            if not _KEY_PATTERN.match(section):
                raise ThresholdFileError(f"{path}:{lineno}: invalid structure name {section!r}")
            if key not in _STRUCTURE_KEYS:
                raise ThresholdFileError(
                    f"{path}:{lineno}: unknown key {section}.{key} "
                    f"(structure keys are {', '.join(_STRUCTURE_KEYS)})"
                )
            structure_values[section][key] = _parse_float(path, lineno, value_text)

    structures: dict[str, StructureThresholds] = {}
    for structure, values in structure_values.items():
        missing = [k for k in _STRUCTURE_KEYS if k not in values]
        if missing:
            raise ThresholdFileError(
                f"{path}: structure {structure!r} is missing {', '.join(missing)}"
            )
        try:
            structures[structure] = StructureThresholds(**values)
        except ValueError as exc:
            raise ThresholdFileError(f"{path}: structure {structure!r}: {exc}") from exc
    if not structures:
        raise ThresholdFileError(f"{path}: no structure thresholds found")
    try:
        rule = GeometricRule(enabled=geometric_enabled, hd_max_mm=geometric_hd)
    except ValueError as exc:
        raise ThresholdFileError(f"{path}: {exc}") from exc
    return ThresholdSet(
        structures=structures,
        geometric=rule,
        multi_component_is_outlier=multi_component,
    )


def _parse_bool(path: Path, lineno: int, text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ThresholdFileError(f"{path}:{lineno}: expected true/false, got {text!r}")


def _parse_float(path: Path, lineno: int, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ThresholdFileError(f"{path}:{lineno}: expected a number, got {text!r}") from exc
