"""Command-line interface.

Subcommands::

    segqc synth      generate one synthetic mask file
    segqc sweep      grade one deformity and tabulate score sensitivity
    segqc calibrate  derive plausibility thresholds from expert masks
    segqc evaluate   score a cohort of predictions and classify outliers
    segqc classify   re-classify stored records against other thresholds
    segqc report     re-render stored records in another format

Exit codes: 0 success, 2 usage error, 3 unreadable/unwritable file,
4 inconsistent inputs.  The output directory is ``--out`` when given, else
``$SEGQC_OUT_DIR``, else the current directory.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

from . import calibration, pipeline, report, synth
from .calibration import GeometricRule, ThresholdSet
from .errors import DataConsistencyError, InputFileError, SegqcError
from .mask_io import write_mask
from .report import ImageResult

__all__ = ["UsageError", "build_parser", "console_main", "main"]

_STRUCTURE_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_DEFAULT_EVALUATE_STRUCTURES = "lv_endo=1,lv_epi=1+2,la=3"
_DEFAULT_CALIBRATE_STRUCTURES = "lv_endo=1,lv_epi=1+2"


class UsageError(SegqcError):
    """Invalid flag values or flag combinations (exit code 2)."""


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.handler(args)
    except (UsageError, pipeline.EmptyManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:  # invalid shape/deformity parameters
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segqc",
        description="Anatomical plausibility scoring and outlier screening for 2D segmentation masks.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    synth_parser = subparsers.add_parser("synth", help="generate one synthetic mask file")
    _add_shape_arguments(synth_parser)
    _add_out_argument(synth_parser)
    synth_parser.add_argument("--label", type=int, default=1, help="label value to write (default 1)")
    synth_parser.add_argument(
        "--out-mask", help="output mask path (default <out>/<kind>.mha; .mhd/.mha/.pgm)"
    )
    synth_parser.set_defaults(handler=_cmd_synth)

    sweep_parser = subparsers.add_parser(
        "sweep", help="grade one deformity and tabulate score sensitivity"
    )
    _add_shape_arguments(sweep_parser)
    _add_out_argument(sweep_parser)
    sweep_parser.add_argument(
        "--magnitudes", required=True,
        help="comma-separated deformity magnitudes in pixels, sorted ascending",
    )
    sweep_parser.add_argument(
        "--figures", action="store_true", help="also render sweep.png next to sweep.csv"
    )
    sweep_parser.set_defaults(handler=_cmd_sweep)

    calibrate_parser = subparsers.add_parser(
        "calibrate", help="derive plausibility thresholds from expert masks"
    )
    calibrate_parser.add_argument(
        "--manifest", required=True,
        help="cohort manifest: image_id<TAB>mask_path[<TAB>tag...] per line",
    )
    calibrate_parser.add_argument(
        "--labels", default=_DEFAULT_CALIBRATE_STRUCTURES,
        help=f"label map name=label[+label],... (default {_DEFAULT_CALIBRATE_STRUCTURES!r})",
    )
    calibrate_parser.add_argument(
        "--lenient", action="store_true",
        help="skip unreadable or incomplete expert masks instead of aborting",
    )
    _add_jobs_argument(calibrate_parser)
    _add_out_argument(calibrate_parser)
    calibrate_parser.add_argument(
        "--out-thresholds", help="threshold file path (default <out>/thresholds.txt)"
    )
    calibrate_parser.set_defaults(handler=_cmd_calibrate)

    evaluate_parser = subparsers.add_parser(
        "evaluate", help="score a cohort of predictions and classify outliers"
    )
    evaluate_parser.add_argument(
        "--manifest", required=True,
        help="cohort manifest: image_id<TAB>pred<TAB>ref[<TAB>tag...] per line (ref '-' for none)",
    )
    evaluate_parser.add_argument(
        "--labels", default=_DEFAULT_EVALUATE_STRUCTURES,
        help=f"label map name=label[+label],... (default {_DEFAULT_EVALUATE_STRUCTURES!r})",
    )
    evaluate_parser.add_argument(
        "--thresholds", help="threshold file (default: shipped expert-calibrated thresholds)"
    )
    evaluate_parser.add_argument(
        "--geo-hd-max", type=float, default=None,
        help="enable the geometric rule: Hausdorff distance above this many mm is an outlier",
    )
    evaluate_parser.add_argument("--cohort-label", help="label for the summary row (default: manifest stem)")
    evaluate_parser.add_argument(
        "--format", choices=report.FORMATS, default="md",
        help="summary format printed to stdout (default md; all formats are written as files)",
    )
    evaluate_parser.add_argument(
        "--figures", action="store_true", help="also render score_distributions.png"
    )
    evaluate_parser.add_argument(
        "--strict", action="store_true",
        help="abort on the first broken image instead of recording a failure",
    )
    _add_jobs_argument(evaluate_parser)
    _add_out_argument(evaluate_parser)
    evaluate_parser.set_defaults(handler=_cmd_evaluate)

    classify_parser = subparsers.add_parser(
        "classify", help="re-classify stored records against other thresholds"
    )
    classify_parser.add_argument("--records", required=True, help="records.json from a previous run")
    classify_parser.add_argument(
        "--thresholds", help="threshold file (default: shipped expert-calibrated thresholds)"
    )
    classify_parser.add_argument(
        "--geo-hd-max", type=float, default=None,
        help="enable the geometric rule: Hausdorff distance above this many mm is an outlier",
    )
    classify_parser.add_argument("--cohort-label", help="label for the summary row (default: records stem)")
    classify_parser.add_argument(
        "--format", choices=report.FORMATS, default="md",
        help="summary format printed to stdout (default md; all formats are written as files)",
    )
    _add_out_argument(classify_parser)
    classify_parser.set_defaults(handler=_cmd_classify)

    report_parser = subparsers.add_parser(
        "report", help="re-render stored records in another format"
    )
    report_parser.add_argument("--records", required=True, help="records.json from a previous run")
    report_parser.add_argument(
        "--format", choices=report.FORMATS, default="md", help="output format (default md)"
    )
    report_parser.add_argument("--cohort-label", help="label for the summary row (default: records stem)")
    _add_out_argument(report_parser)
    report_parser.set_defaults(handler=_cmd_report)

    return parser


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _cmd_synth(args: argparse.Namespace) -> int:
    spec = _shape_spec_from_args(args, deformity_required=False)
    mask = synth.generate(
        spec,
        canvas=_parse_canvas(args.canvas),
        spacing=_parse_spacing(args.spacing),
        label=args.label,
    )
    out_dir = _resolve_out_dir(args)
    path = Path(args.out_mask) if args.out_mask else out_dir / f"{spec.kind}.mha"
    write_mask(mask, path)
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = _shape_spec_from_args(args, deformity_required=True)
    magnitudes = _parse_magnitudes(args.magnitudes)
    rows = synth.sensitivity_sweep(
        spec, magnitudes, canvas=_parse_canvas(args.canvas), spacing=_parse_spacing(args.spacing)
    )
    out_dir = _resolve_out_dir(args)
    csv_path = out_dir / "sweep.csv"
    lines = ["magnitude,convexity,simplicity"]
    lines += [f"{m!r},{cx!r},{sp!r}" for m, cx, sp in rows]
    csv_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"{'magnitude':>10} {'convexity':>10} {'simplicity':>11}")
    for magnitude, cx, sp in rows:
        print(f"{magnitude:>10g} {cx:>10.4f} {sp:>11.4f}")
    print(f"wrote {csv_path}")
    if args.figures:
        from . import figures

        png_path = out_dir / "sweep.png"
        figures.save_sweep_curves(rows, png_path, title=f"{spec.kind} + {spec.deformity.kind}")
        print(f"wrote {png_path}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    structures = _parse_structures(args.labels)
    pairs = pipeline.read_manifest(args.manifest, with_reference=False)
    results = pipeline.evaluate_pairs(
        pairs, structures=structures, thresholds=None, jobs=args.jobs, strict=not args.lenient
    )
    records = [record for result in results for record in result.records]
    thresholds = calibration.calibrate(records, structures=list(structures))
    out_dir = _resolve_out_dir(args)
    path = Path(args.out_thresholds) if args.out_thresholds else out_dir / "thresholds.txt"
    calibration.save_thresholds(thresholds, path)
    for name in sorted(thresholds.structures):
        limits = thresholds.structures[name]
        print(
            f"{name}: min_convexity={limits.min_convexity:.6g} "
            f"min_simplicity={limits.min_simplicity:.6g}"
        )
    print(f"wrote {path}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    structures = _parse_structures(args.labels)
    thresholds = _resolve_thresholds(args)
    pairs = pipeline.read_manifest(args.manifest, with_reference=True)
    results = pipeline.evaluate_pairs(
        pairs, structures=structures, thresholds=thresholds, jobs=args.jobs, strict=args.strict
    )
    label = args.cohort_label or Path(args.manifest).stem
    out_dir = _resolve_out_dir(args)
    _write_result_files(results, label, out_dir)
    if args.figures:
        from . import figures

        png_path = out_dir / "score_distributions.png"
        figures.save_score_distributions(results, thresholds, png_path)
        print(f"wrote {png_path}", file=sys.stderr)
    print(report.render(report.aggregate(results, label=label), args.format), end="")
    return 0


def _cmd_classify(args: argparse.Namespace) -> int:
    thresholds = _resolve_thresholds(args)
    stored = _read_records_file(args.records)
    results = []
    for result in stored:
        if result.error is not None:
            verdict = pipeline.failure_verdict()
        else:
            verdict = calibration.classify(result.records, thresholds)
        results.append(
            ImageResult(
                image_id=result.image_id,
                records=result.records,
                verdict=verdict,
                tags=result.tags,
                error=result.error,
            )
        )
    label = args.cohort_label or Path(args.records).stem
    out_dir = _resolve_out_dir(args)
    _write_result_files(results, label, out_dir)
    print(report.render(report.aggregate(results, label=label), args.format), end="")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results = _read_records_file(args.records)
    label = args.cohort_label or Path(args.records).stem
    summary = report.aggregate(results, label=label)
    rendered = report.render(summary, args.format)
    out_dir = _resolve_out_dir(args)
    path = out_dir / f"summary.{args.format}"
    path.write_text(rendered, encoding="utf-8")
    print(rendered, end="")
    print(f"wrote {path}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# shared argument plumbing
# ---------------------------------------------------------------------------

def _add_shape_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("kind", choices=synth.SHAPE_KINDS, help="base shape")
    parser.add_argument("--radius", type=float, help="disk/blob radius in px")
    parser.add_argument("--side", type=float, help="square side in px")
    parser.add_argument("--semi-axes", help="ellipse semi-axes in px, e.g. 40,25")
    parser.add_argument("--ring", help="bridge inner,outer radii in px, e.g. 20,34")
    parser.add_argument(
        "--opening", type=float, default=90.0, help="bridge opening angle in degrees (default 90)"
    )
    parser.add_argument("--canvas", default="256x256", help="canvas WxH in px (default 256x256)")
    parser.add_argument(
        "--spacing", default="1.0", help="pixel spacing in mm: SX or SX,SY (default 1.0)"
    )
    parser.add_argument("--seed", type=int, default=0, help="random seed for blob harmonics")
    parser.add_argument("--deformity", choices=synth.DEFORMITY_KINDS, help="deformity to apply")
    parser.add_argument(
        "--magnitude", type=float, default=0.0, help="deformity magnitude in px (synth only)"
    )
    parser.add_argument(
        "--angle", type=float, default=0.0, help="deformity direction in degrees (default 0)"
    )


def _add_out_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out", help="output directory (default: $SEGQC_OUT_DIR, else current directory)"
    )


def _add_jobs_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--jobs", type=int, default=1, help="parallel worker count (default 1)"
    )


def _resolve_out_dir(args: argparse.Namespace) -> Path:
    out = args.out or os.environ.get("SEGQC_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_thresholds(args: argparse.Namespace) -> ThresholdSet:
    if args.thresholds:
        thresholds = calibration.load_thresholds(args.thresholds)
    else:
        thresholds = calibration.default_thresholds()
    if args.geo_hd_max is not None:
        if args.geo_hd_max <= 0:
            raise UsageError(f"--geo-hd-max must be positive, got {args.geo_hd_max}")
        thresholds = ThresholdSet(
            structures=thresholds.structures,
            geometric=GeometricRule(enabled=True, hd_max_mm=args.geo_hd_max),
            multi_component_is_outlier=thresholds.multi_component_is_outlier,
        )
    return thresholds


def _write_result_files(results, label: str, out_dir: Path) -> None:
    summary = report.aggregate(results, label=label)
    (out_dir / "records.csv").write_text(report.records_to_csv(results), encoding="utf-8")
    (out_dir / "records.json").write_text(report.records_to_json(results), encoding="utf-8")
    for fmt in report.FORMATS:
        (out_dir / f"summary.{fmt}").write_text(report.render(summary, fmt), encoding="utf-8")


def _read_records_file(path_text: str) -> list[ImageResult]:
    path = Path(path_text)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"{path}: cannot read records: {exc}") from exc
    try:
        return report.records_from_json(text)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFileError(f"{path}: not a valid records file: {exc}") from exc


def _shape_spec_from_args(args: argparse.Namespace, deformity_required: bool) -> synth.ShapeSpec:
    deformity = None
    if args.deformity:
        deformity = synth.Deformity(
            kind=args.deformity, magnitude=max(args.magnitude, 0.0), angle_deg=args.angle
        )
        if args.magnitude < 0:
            raise UsageError(f"--magnitude must be >= 0, got {args.magnitude}")
    elif deformity_required:
        raise UsageError("sweep requires --deformity")
    try:
        return synth.ShapeSpec(
            kind=args.kind,
            radius=args.radius,
            side=args.side,
            semi_axes=_parse_float_pair(args.semi_axes, "--semi-axes"),
            ring_radii=_parse_float_pair(args.ring, "--ring"),
            opening_deg=args.opening,
            deformity=deformity,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_structures(text: str) -> dict[str, frozenset[int]]:
    structures: dict[str, frozenset[int]] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"structure spec must be name=label[+label], got {part!r}")
        name, labels_text = (p.strip() for p in part.split("=", 1))
        if not _STRUCTURE_NAME.match(name):
            raise UsageError(f"invalid structure name {name!r}")
        if name in structures:
            raise UsageError(f"duplicate structure name {name!r}")
        try:
            labels = frozenset(int(v) for v in labels_text.split("+"))
        except ValueError as exc:
            raise UsageError(f"invalid label list {labels_text!r} for structure {name!r}") from exc
        if not labels or any(not 1 <= v <= 255 for v in labels):
            raise UsageError(f"labels for {name!r} must be in 1..255")
        structures[name] = labels
    if not structures:
        raise UsageError("at least one structure must be configured")
    return structures


def _parse_canvas(text: str) -> tuple[int, int]:
    match = re.match(r"^(\d+)x(\d+)$", text.strip())
    if not match:
        raise UsageError(f"canvas must be WxH (e.g. 256x256), got {text!r}")
    return int(match.group(1)), int(match.group(2))


def _parse_spacing(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"spacing must be SX or SX,SY, got {text!r}") from exc
    if len(values) == 1:
        values = [values[0], values[0]]
    if len(values) != 2 or any(v <= 0 for v in values):
        raise UsageError(f"spacing must be one or two positive numbers, got {text!r}")
    return values[0], values[1]


def _parse_float_pair(text: str | None, flag: str) -> tuple[float, float] | None:
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",")]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"{flag} must be two comma-separated numbers, got {text!r}") from exc
    if len(values) != 2:
        raise UsageError(f"{flag} must be two comma-separated numbers, got {text!r}")
    return values[0], values[1]


def _parse_magnitudes(text: str) -> list[float]:
    try:
        magnitudes = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"--magnitudes must be comma-separated numbers, got {text!r}") from exc
    if not magnitudes:
        raise UsageError("--magnitudes must not be empty")
    if any(b < a for a, b in zip(magnitudes, magnitudes[1:])):
        raise UsageError(f"--magnitudes must be sorted ascending, got {text!r}")
    if any(m < 0 for m in magnitudes):
        raise UsageError("--magnitudes must be non-negative")
    return magnitudes


if __name__ == "__main__":
    console_main()
