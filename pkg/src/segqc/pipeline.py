"""Batch evaluation of mask cohorts with deterministic parallelism.

Images are independent, so cohorts fan out over a thread pool; results are
always reduced in one canonical order (sorted by image id), which makes every
report byte-identical no matter how many workers ran.

Failure policy: by default a broken image (unreadable file, mismatched pixel
grids, empty prediction for a gated structure) becomes a per-image failure
record that counts as an anatomical outlier, and the rest of the cohort keeps
going.  ``strict=True`` turns the first such failure into an exception, which
calibration uses so bad expert data cannot silently loosen thresholds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import calibration, geometry, metrics
from .calibration import OutlierVerdict, Reason, ThresholdSet
from .errors import DataConsistencyError, InputFileError
from .mask_io import LabelMask, read_mask
from .metrics import MetricRecord
from .report import ImageResult

__all__ = [
    "DEFAULT_STRUCTURES",
    "EmptyManifestError",
    "PairSpec",
    "evaluate_pairs",
    "failure_verdict",
    "read_manifest",
]


class EmptyManifestError(DataConsistencyError):
    """The manifest parses but lists no images (usually a usage mistake)."""

# Structure name -> the raw label values it aggregates.  The epicardial
# contour encloses both the cavity and the muscle, so it merges labels 1 + 2;
# the left atrium is scored when present but has no shipped thresholds.
DEFAULT_STRUCTURES: dict[str, frozenset[int]] = {
    "lv_endo": frozenset({1}),
    "lv_epi": frozenset({1, 2}),
    "la": frozenset({3}),
}


@dataclass(frozen=True)
class PairSpec:
    """One image to evaluate: a prediction and an optional reference.

    ``pred`` and ``ref`` are file paths or in-memory :class:`LabelMask`
    objects; ``ref=None`` evaluates plausibility scores only.  ``tags`` are
    carried through to the output untouched.
    """

    image_id: str
    pred: Path | LabelMask
    ref: Path | LabelMask | None = None
    tags: tuple[str, ...] = ()


def failure_verdict() -> OutlierVerdict:
    """Verdict assigned to images whose evaluation failed outright."""
    return OutlierVerdict(
        anatomical=True,
        geometrical=False,
        reasons=(Reason("image", "evaluation_failure", None, None),),
    )


def read_manifest(path: str | Path, *, with_reference: bool) -> list[PairSpec]:
    """Parse a cohort manifest: one tab-separated line per image.

    With references each line is ``image_id<TAB>pred<TAB>ref[<TAB>tag...]``
    (``-`` for no reference); without, ``image_id<TAB>mask[<TAB>tag...]``.
    Paths are resolved relative to the manifest's directory.  Blank lines and
    ``#`` comments are skipped; duplicate image ids are rejected because
    canonical ordering needs unique ids.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"{path}: cannot read manifest: {exc}") from exc

    base = path.parent
    min_columns = 3 if with_reference else 2
    pairs: list[PairSpec] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        columns = [c.strip() for c in line.split("\t")]
        if len(columns) < min_columns or any(not c for c in columns[:min_columns]):
            raise InputFileError(
                f"{path}:{lineno}: expected at least {min_columns} tab-separated "
                f"columns, got {line!r}"
            )
        image_id = columns[0]
        if image_id in seen:
            raise DataConsistencyError(f"{path}:{lineno}: duplicate image id {image_id!r}")
        seen.add(image_id)
        pred = base / columns[1]
        if with_reference:
            ref = None if columns[2] == "-" else base / columns[2]
            tags = tuple(columns[3:])
        else:
            ref = None
            tags = tuple(columns[2:])
        pairs.append(PairSpec(image_id=image_id, pred=pred, ref=ref, tags=tags))
    if not pairs:
        raise EmptyManifestError(f"{path}: manifest lists no images")
    return pairs


def evaluate_pairs(
    pairs: Iterable[PairSpec],
    structures: Mapping[str, frozenset[int]] | None = None,
    thresholds: ThresholdSet | None = None,
    jobs: int = 1,
    strict: bool = False,
) -> list[ImageResult]:
    """Evaluate a cohort of mask pairs, in parallel when ``jobs`` > 1.

    Every configured structure is scored per image; structures covered by
    ``thresholds`` gate the anatomical verdict (``thresholds=None`` skips
    classification and leaves neutral verdicts, for calibration runs).
    Results come back sorted by image id regardless of worker count.
    """
    specs = list(pairs)
    if len({spec.image_id for spec in specs}) != len(specs):
        raise DataConsistencyError("duplicate image ids in cohort")
    structure_map = dict(structures) if structures is not None else dict(DEFAULT_STRUCTURES)
    if not structure_map:
        raise ValueError("at least one structure must be configured")
    gated = set(thresholds.structures) if thresholds is not None else set()

    def one(spec: PairSpec) -> ImageResult:
        return _evaluate_one(spec, structure_map, gated, thresholds, strict)

    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(specs) <= 1:
        results = [one(spec) for spec in specs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(one, specs))
    return sorted(results, key=lambda result: result.image_id)


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _evaluate_one(
    spec: PairSpec,
    structures: Mapping[str, frozenset[int]],
    gated: set[str],
    thresholds: ThresholdSet | None,
    strict: bool,
) -> ImageResult:
    try:
        pred = _load(spec.pred)
        ref = _load(spec.ref) if spec.ref is not None else None
    except InputFileError as exc:
        if strict:
            raise
        return _failed_image(spec, str(exc))

    if ref is not None and (pred.labels.shape != ref.labels.shape or pred.spacing != ref.spacing):
        message = (
            f"prediction and reference disagree on pixel grid: "
            f"{pred.labels.shape} @ {pred.spacing} vs {ref.labels.shape} @ {ref.spacing}"
        )
        if strict:
            raise DataConsistencyError(f"{spec.image_id}: {message}")
        return _failed_image(spec, message)

    records: list[MetricRecord] = []
    for name, labels in structures.items():
        record = _evaluate_structure(name, labels, pred, ref, gated)
        if record is None:
            continue
        if record.error is not None and strict:
            raise DataConsistencyError(f"{spec.image_id}: {name}: {record.error}")
        records.append(record)

    if thresholds is None:
        verdict = OutlierVerdict(anatomical=False, geometrical=False)
    else:
        verdict = calibration.classify(records, thresholds)
    return ImageResult(
        image_id=spec.image_id,
        records=tuple(records),
        verdict=verdict,
        tags=spec.tags,
    )


def _evaluate_structure(
    name: str,
    labels: frozenset[int],
    pred: LabelMask,
    ref: LabelMask | None,
    gated: set[str],
) -> MetricRecord | None:
    """Score one structure; ``None`` means the structure is absent by design.

    An empty prediction is an evaluation failure when the reference carries
    the structure (it was missed) or when the structure gates the verdict; a
    structure absent from both masks, or an ungated structure absent from a
    reference-free cohort, is simply skipped.
    """
    pred_region = _try_extract(pred, labels)
    if ref is None:
        if pred_region is None:
            if name in gated:
                return MetricRecord(structure=name, error="prediction has no pixels")
            return None
        return metrics.compute_record(name, pred_region)

    ref_region = _try_extract(ref, labels)
    if ref_region is None and pred_region is None:
        return None
    if pred_region is None:
        return MetricRecord(structure=name, error="prediction has no pixels")
    if ref_region is None:
        return MetricRecord(structure=name, error="reference has no pixels")
    return metrics.compute_record(name, pred_region, ref_region)


def _try_extract(mask: LabelMask, labels: frozenset[int]):
    try:
        return geometry.extract_region(mask, labels)
    except geometry.EmptyRegionError:
        return None


def _load(source: Path | LabelMask) -> LabelMask:
    if isinstance(source, LabelMask):
        return source
    return read_mask(source)


def _failed_image(spec: PairSpec, message: str) -> ImageResult:
    return ImageResult(
        image_id=spec.image_id,
        records=(),
        verdict=failure_verdict(),
        tags=spec.tags,
        error=message,
    )
