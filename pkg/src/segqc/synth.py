"""Deterministic synthetic masks for calibration tests and sensitivity sweeps.

Base shapes: ``disk``, ``square``, ``ellipse``, ``bridge`` (an open annulus
sector, myocardium-like), and ``blob`` (a star-convex outline whose radius is
modulated by seeded random harmonics; undeformed blobs are verified at
generation time to pass the shipped plausibility thresholds and are
regenerated with an incremented seed if they do not).

Deformities model typical segmentation failures, each graded by a magnitude
in pixels:

* ``spike`` — a one-pixel-wide 4-connected ray of the given length pushed out
  of the boundary; inflates the perimeter, so simplicity falls.
* ``notch`` — a disk-shaped interior bite of the given radius, placed at 35%
  of the local radius from the centre so moderate magnitudes carve a hole and
  leave the convex hull untouched; removes area, so convexity falls.
* ``neck`` — a corridor across the shape thinned by the given amount from
  both sides (floored at a 2-pixel-wide channel so the shape stays
  connected).

Identical spec and seed always produce the identical mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import calibration, geometry, metrics
from .mask_io import LabelMask

__all__ = [
    "DEFORMITY_KINDS",
    "SHAPE_KINDS",
    "CanvasFitError",
    "Deformity",
    "ShapeSpec",
    "generate",
    "sensitivity_sweep",
]

SHAPE_KINDS = ("disk", "square", "ellipse", "bridge", "blob")
DEFORMITY_KINDS = ("spike", "notch", "neck")

_BLOB_HARMONICS = range(2, 7)
_BLOB_AMPLITUDE = (0.01, 0.06)
_BLOB_MAX_RETRIES = 25
# Margin above the shipped minima an undeformed blob must clear.
_BLOB_SCORE_MARGIN = 0.01
_NOTCH_CENTER_FRACTION = 0.35
_NECK_HALF_LENGTH = 3.0


class CanvasFitError(ValueError):
    """The requested shape does not fit the canvas with a 1-pixel margin."""


@dataclass(frozen=True)
class Deformity:
    """One graded deformity: what kind, how large (pixels), which direction."""

    kind: str
    magnitude: float
    angle_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in DEFORMITY_KINDS:
            raise ValueError(f"unknown deformity kind {self.kind!r}, expected one of {DEFORMITY_KINDS}")
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0.0):
            raise ValueError(f"magnitude must be >= 0, got {self.magnitude}")


@dataclass(frozen=True)
class ShapeSpec:
    """Recipe for one synthetic shape.

    Size fields are in pixels and only the ones matching ``kind`` are used:
    ``radius`` for disk and blob (mean radius), ``side`` for square,
    ``semi_axes`` for ellipse, ``ring_radii`` (inner, outer) plus
    ``opening_deg`` for bridge.  ``seed`` drives the blob's random harmonics.
    """

    kind: str
    radius: float | None = None
    side: float | None = None
    semi_axes: tuple[float, float] | None = None
    ring_radii: tuple[float, float] | None = None
    opening_deg: float = 90.0
    deformity: Deformity | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}, expected one of {SHAPE_KINDS}")


def generate(
    spec: ShapeSpec,
    canvas: tuple[int, int] = (256, 256),
    spacing: tuple[float, float] = (1.0, 1.0),
    label: int = 1,
) -> LabelMask:
    """Rasterize a shape spec onto a canvas.

    ``canvas`` is ``(width, height)`` in pixels.  The shape is centred and
    must keep a 1-pixel background margin; :class:`CanvasFitError` is raised
    otherwise.  The returned mask carries ``label`` on the shape and 0
    elsewhere.
    """
    width, height = (int(v) for v in canvas)
    if width < 3 or height < 3:
        raise ValueError(f"canvas must be at least 3 x 3 pixels, got {canvas}")
    if not 1 <= int(label) <= 255:
        raise ValueError(f"label must be in 1..255, got {label}")

    if spec.kind == "blob":
        mask = _generate_verified_blob(spec, width, height)
    else:
        mask = _rasterize_base(spec, width, height)
        if spec.deformity is not None:
            mask = _apply_deformity(mask, spec)
    if not mask.any():
        raise ValueError(f"shape spec produced an empty mask: {spec}")
    _require_margin(mask, spec)

    labels = np.zeros((height, width), dtype=np.uint8)
    labels[mask] = int(label)
    return LabelMask(labels, spacing)


def sensitivity_sweep(
    spec: ShapeSpec,
    magnitudes: list[float],
    canvas: tuple[int, int] = (256, 256),
    spacing: tuple[float, float] = (1.0, 1.0),
) -> list[tuple[float, float, float]]:
    """Grade one deformity: rows of (magnitude, convexity, simplicity).

    ``spec.deformity`` names the deformity; its magnitude is overridden row by
    row.  ``magnitudes`` must be sorted ascending.  A magnitude of 0 reproduces
    the undeformed shape exactly.
    """
    if spec.deformity is None:
        raise ValueError("sensitivity_sweep needs a spec with a deformity")
    if any(b < a for a, b in zip(magnitudes, magnitudes[1:])):
        raise ValueError(f"magnitudes must be sorted ascending, got {magnitudes}")
    rows = []
    for magnitude in magnitudes:
        deformed = replace(spec, deformity=replace(spec.deformity, magnitude=float(magnitude)))
        mask = generate(deformed, canvas=canvas, spacing=spacing)
        region = geometry.extract_region(mask, {1})
        rows.append((float(magnitude), metrics.convexity(region), metrics.simplicity(region)))
    return rows


# ---------------------------------------------------------------------------
# base shapes
# ---------------------------------------------------------------------------

def _grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray, float, float]:
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    ys, xs = np.ogrid[0.0:height, 0.0:width]
    return xs - cx, ys - cy, cx, cy


def _rasterize_base(spec: ShapeSpec, width: int, height: int) -> np.ndarray:
    dx, dy, _, _ = _grid(width, height)
    if spec.kind == "disk":
        r = _required(spec.radius, "radius", spec.kind)
        return dx * dx + dy * dy <= r * r
    if spec.kind == "square":
        side = int(_required(spec.side, "side", spec.kind))
        if side < 1:
            raise ValueError(f"square side must be >= 1, got {side}")
        left = (width - side) // 2
        top = (height - side) // 2
        mask = np.zeros((height, width), dtype=bool)
        mask[max(top, 0) : top + side, max(left, 0) : left + side] = True
        if mask.sum() != side * side:
            raise CanvasFitError(f"square of side {side} exceeds canvas {width} x {height}")
        return mask
    if spec.kind == "ellipse":
        a, b = _required(spec.semi_axes, "semi_axes", spec.kind)
        if a <= 0 or b <= 0:
            raise ValueError(f"semi-axes must be positive, got {(a, b)}")
        return (dx / a) ** 2 + (dy / b) ** 2 <= 1.0
    if spec.kind == "bridge":
        inner, outer = _required(spec.ring_radii, "ring_radii", spec.kind)
        if not 0 < inner < outer:
            raise ValueError(f"ring radii must satisfy 0 < inner < outer, got {(inner, outer)}")
        if not 0.0 < spec.opening_deg < 360.0:
            raise ValueError(f"opening must be in (0, 360) degrees, got {spec.opening_deg}")
        dist_sq = dx * dx + dy * dy
        ring = (inner * inner <= dist_sq) & (dist_sq <= outer * outer)
        # The opening is a wedge centred on the +y direction.
        angle = np.arctan2(dy, dx) - math.pi / 2.0
        angle = (angle + math.pi) % (2.0 * math.pi) - math.pi
        return ring & (np.abs(angle) >= math.radians(spec.opening_deg) / 2.0)
    if spec.kind == "blob":
        r0 = _required(spec.radius, "radius", spec.kind)
        rng = np.random.default_rng(spec.seed)
        amplitudes = rng.uniform(*_BLOB_AMPLITUDE, size=len(_BLOB_HARMONICS))
        phases = rng.uniform(0.0, 2.0 * math.pi, size=len(_BLOB_HARMONICS))
        angle = np.arctan2(dy, dx)
        limit = np.full(angle.shape, float(r0))
        for k, amp, phase in zip(_BLOB_HARMONICS, amplitudes, phases):
            limit += r0 * amp * np.cos(k * angle + phase)
        return dx * dx + dy * dy <= limit * limit
    raise AssertionError(f"unhandled shape kind {spec.kind}")


def _required(value, name: str, kind: str):
    if value is None:
        raise ValueError(f"shape kind {kind!r} requires {name}")
    return value


def _generate_verified_blob(spec: ShapeSpec, width: int, height: int) -> np.ndarray:
    """Rasterize a blob, retrying with incremented seeds until the undeformed
    shape clears the shipped plausibility minima with a margin."""
    limits = calibration.default_thresholds().structures["lv_endo"]
    candidate = spec
    for _ in range(_BLOB_MAX_RETRIES):
        base = _rasterize_base(candidate, width, height)
        if base.any() and _blob_passes(base, limits):
            if candidate.deformity is not None:
                return _apply_deformity(base, candidate)
            return base
        candidate = replace(candidate, seed=candidate.seed + 1)
    raise RuntimeError(
        f"could not generate a plausible blob near seed {spec.seed} "
        f"after {_BLOB_MAX_RETRIES} attempts"
    )


def _blob_passes(base: np.ndarray, limits) -> bool:
    labels = np.zeros(base.shape, dtype=np.uint8)
    labels[base] = 1
    try:
        region = geometry.extract_region(LabelMask(labels), {1})
        cx = metrics.convexity(region)
        sp = metrics.simplicity(region)
    except (geometry.EmptyRegionError, metrics.UndefinedMetricError):
        return False
    return (
        region.component_count == 1
        and cx > limits.min_convexity + _BLOB_SCORE_MARGIN
        and sp > limits.min_simplicity + _BLOB_SCORE_MARGIN
    )


def _require_margin(mask: np.ndarray, spec: ShapeSpec) -> None:
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise CanvasFitError(
            f"shape touches the canvas border (needs a 1-pixel margin): {spec}"
        )


# ---------------------------------------------------------------------------
# deformities
# ---------------------------------------------------------------------------

def _apply_deformity(mask: np.ndarray, spec: ShapeSpec) -> np.ndarray:
    deformity = spec.deformity
    assert deformity is not None
    if deformity.magnitude == 0.0:
        return mask
    if deformity.kind == "spike":
        return _apply_spike(mask, deformity)
    if deformity.kind == "notch":
        return _apply_notch(mask, deformity)
    if deformity.kind == "neck":
        return _apply_neck(mask, deformity)
    raise AssertionError(f"unhandled deformity kind {deformity.kind}")


def _center_and_direction(mask: np.ndarray, angle_deg: float):
    height, width = mask.shape
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    theta = math.radians(angle_deg)
    return cx, cy, math.cos(theta), math.sin(theta)


def _boundary_distance(mask: np.ndarray, cx: float, cy: float, ux: float, uy: float) -> float:
    """Distance from the centre to the last foreground pixel along a ray."""
    height, width = mask.shape
    limit = math.hypot(width, height)
    last_inside = None
    t = 0.0
    while t <= limit:
        col = round(cx + t * ux)
        row = round(cy + t * uy)
        if 0 <= row < height and 0 <= col < width and mask[row, col]:
            last_inside = t
        t += 0.5
    if last_inside is None:
        raise ValueError("deformity ray does not intersect the shape")
    return last_inside


def _apply_spike(mask: np.ndarray, deformity: Deformity) -> np.ndarray:
    """Push a 1-pixel-wide 4-connected ray out of the boundary."""
    cx, cy, ux, uy = _center_and_direction(mask, deformity.angle_deg)
    reach = _boundary_distance(mask, cx, cy, ux, uy)
    start = max(reach - 1.0, 0.0)
    stop = reach + deformity.magnitude
    height, width = mask.shape
    row0, col0 = round(cy + start * uy), round(cx + start * ux)
    row1, col1 = round(cy + stop * uy), round(cx + stop * ux)
    if not (1 <= row1 < height - 1 and 1 <= col1 < width - 1):
        raise CanvasFitError(f"spike of length {deformity.magnitude} exceeds the canvas")
    out = mask.copy()
    for row, col in _walk_4connected(row0, col0, row1, col1):
        out[row, col] = True
    return out


def _walk_4connected(row0: int, col0: int, row1: int, col1: int):
    """Pixels of a 4-connected digital line between two pixel centres.

    Steps one axis at a time, picking the axis whose next grid crossing comes
    first along the segment (exact integer comparison); diagonal double-steps
    never occur, so the drawn ray cannot split into extra components.
    """
    nx = abs(col1 - col0)
    ny = abs(row1 - row0)
    sx = 1 if col1 >= col0 else -1
    sy = 1 if row1 >= row0 else -1
    row, col = row0, col0
    yield row, col
    ix = iy = 0
    while ix < nx or iy < ny:
        if (1 + 2 * ix) * ny < (1 + 2 * iy) * nx:
            col += sx
            ix += 1
        else:
            row += sy
            iy += 1
        yield row, col


def _apply_notch(mask: np.ndarray, deformity: Deformity) -> np.ndarray:
    """Carve a disk-shaped bite placed at 35% of the local radius from the
    centre, so moderate magnitudes remove interior area and leave the convex
    hull untouched."""
    cx, cy, ux, uy = _center_and_direction(mask, deformity.angle_deg)
    offset = _NOTCH_CENTER_FRACTION * _boundary_distance(mask, cx, cy, ux, uy)
    bite_x = cx + offset * ux
    bite_y = cy + offset * uy
    height, width = mask.shape
    ys, xs = np.ogrid[0.0:height, 0.0:width]
    bite = (xs - bite_x) ** 2 + (ys - bite_y) ** 2 <= deformity.magnitude ** 2
    out = mask & ~bite
    if not out.any():
        raise ValueError(f"notch of radius {deformity.magnitude} removed the whole shape")
    return out


def _apply_neck(mask: np.ndarray, deformity: Deformity) -> np.ndarray:
    """Thin a corridor across the shape by the magnitude from both sides."""
    cx, cy, ux, uy = _center_and_direction(mask, deformity.angle_deg)
    reach = _boundary_distance(mask, cx, cy, ux, uy)
    mid = 0.5 * reach
    height, width = mask.shape
    ys, xs = np.ogrid[0.0:height, 0.0:width]
    along = (xs - cx) * ux + (ys - cy) * uy
    across = np.abs((xs - cx) * uy - (ys - cy) * ux)
    slab = np.abs(along - mid) <= _NECK_HALF_LENGTH
    in_slab = mask & slab
    if not in_slab.any():
        return mask.copy()
    widest = float(across[in_slab].max())
    keep_within = max(1.0, widest - deformity.magnitude)
    out = mask & ~(slab & (across > keep_within))
    return out
