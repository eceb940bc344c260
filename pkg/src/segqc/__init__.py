"""Anatomical plausibility scoring and outlier screening for 2D cardiac
segmentation masks.

The package scores each segmented structure with two reference-free
plausibility metrics — convexity (area over convex-hull area) and simplicity
(the isoperimetric quotient) — alongside classical agreement metrics (Dice,
mean absolute boundary distance, Hausdorff distance).  Thresholds calibrated
as the per-structure minima of an expert cohort then split a model's outputs
into anatomically and geometrically implausible cases.
"""

from .calibration import (
    EmptyCohortError,
    GeometricRule,
    MissingThresholdError,
    OutlierVerdict,
    Reason,
    StructureThresholds,
    ThresholdFileError,
    ThresholdSet,
    calibrate,
    classify,
    default_thresholds,
    load_thresholds,
    save_thresholds,
)
from .errors import DataConsistencyError, InputFileError, SegqcError
from .geometry import (
    EmptyRegionError,
    Polygon,
    Region,
    area,
    contour_area,
    convex_hull,
    extract_region,
    perimeter,
    polygon_area,
)
from .mask_io import (
    LabelMask,
    MaskFormatError,
    SpacingDefaultedWarning,
    read_mask,
    write_mask,
)
from .metrics import (
    CONVEXITY_TOLERANCE,
    SIMPLICITY_TOLERANCE,
    GridMismatchError,
    MetricRecord,
    UndefinedMetricError,
    compute_record,
    convexity,
    dice,
    hausdorff,
    mean_absolute_distance,
    simplicity,
)
from .pipeline import DEFAULT_STRUCTURES, PairSpec, evaluate_pairs, read_manifest
from .report import (
    CohortSummary,
    ImageResult,
    MetricStats,
    OutlierStats,
    aggregate,
    records_from_json,
    records_to_csv,
    records_to_json,
    render,
)
from .synth import DEFORMITY_KINDS, SHAPE_KINDS, Deformity, ShapeSpec, generate, sensitivity_sweep

__version__ = "0.1.0"

__all__ = [
    "CONVEXITY_TOLERANCE",
    "DEFAULT_STRUCTURES",
    "DEFORMITY_KINDS",
    "SHAPE_KINDS",
    "SIMPLICITY_TOLERANCE",
    "CohortSummary",
    "DataConsistencyError",
    "Deformity",
    "EmptyCohortError",
    "EmptyRegionError",
    "GeometricRule",
    "GridMismatchError",
    "ImageResult",
    "InputFileError",
    "LabelMask",
    "MaskFormatError",
    "MetricRecord",
    "MetricStats",
    "MissingThresholdError",
    "OutlierStats",
    "OutlierVerdict",
    "PairSpec",
    "Polygon",
    "Reason",
    "Region",
    "SegqcError",
    "ShapeSpec",
    "SpacingDefaultedWarning",
    "StructureThresholds",
    "ThresholdFileError",
    "ThresholdSet",
    "UndefinedMetricError",
    "aggregate",
    "area",
    "calibrate",
    "classify",
    "compute_record",
    "contour_area",
    "convex_hull",
    "convexity",
    "default_thresholds",
    "dice",
    "evaluate_pairs",
    "extract_region",
    "generate",
    "hausdorff",
    "load_thresholds",
    "mean_absolute_distance",
    "perimeter",
    "polygon_area",
    "read_manifest",
    "read_mask",
    "records_from_json",
    "records_to_csv",
    "records_to_json",
    "render",
    "save_thresholds",
    "sensitivity_sweep",
    "simplicity",
    "write_mask",
]
