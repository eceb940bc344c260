"""Raster-to-geometry primitives: regions, boundaries, areas, hulls.

A :class:`Region` is the set of pixels carrying one structure's labels plus
the traced boundary of that set.  Boundaries are marching-squares mid-edge
contours (foreground 4-connected, background 8-connected) relaxed by two
passes of a cyclic ``(1, 2, 1)/4`` vertex filter.  The relaxation removes the
staircase bias of raw mid-edge tracing, whose polyline overestimates smooth
perimeters by roughly 5%; after relaxation a rasterized disk's perimeter is
within about 1% of the true circumference while straight axis-aligned runs
are left exactly in place.

All outputs are in physical units: vertex coordinates in millimetres
(columns ``x``, ``y``), areas in mm^2, lengths in mm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import DataConsistencyError
from .mask_io import LabelMask

__all__ = [
    "EmptyRegionError",
    "Polygon",
    "Region",
    "area",
    "contour_area",
    "convex_hull",
    "extract_region",
    "perimeter",
    "polygon_area",
]

# Foreground connectivity: edge-adjacent pixels form one component.
FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

_SMOOTHING_PASSES = 2


class EmptyRegionError(DataConsistencyError):
    """No pixel carries any of the requested labels.

    Signals a degenerate or missing prediction; batch evaluation reports it
    per image instead of crashing the run.
    """


@dataclass(frozen=True, eq=False)
class Polygon:
    """A closed polygon in physical coordinates.

    ``vertices`` is an ``(n, 2)`` float array of ``(x, y)`` millimetre
    coordinates listed counter-clockwise.  ``degenerate`` marks hulls of
    collinear pixel sets, which enclose zero area and carry only the extreme
    points of the line.
    """

    vertices: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if not self.degenerate and len(vertices) < 3:
            raise ValueError("a non-degenerate polygon needs at least 3 vertices")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)


@dataclass(frozen=True, eq=False)
class Region:
    """Pixels of one structure plus its traced boundary.

    ``loops`` holds one ``(n, 2)`` vertex array per closed boundary loop in
    physical coordinates, oriented so outer loops wind counter-clockwise
    (positive signed area) and holes clockwise (negative).
    """

    mask: np.ndarray
    spacing: tuple[float, float]
    pixel_count: int
    component_count: int
    loops: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        self.mask.setflags(write=False)
        for loop in self.loops:
            loop.setflags(write=False)


def extract_region(mask: LabelMask, labels) -> Region:
    """Collect pixels whose label is in ``labels`` and trace their boundary.

    ``labels`` is a non-empty iterable of label values; a pixel belongs to the
    region when its label matches any of them, so composite structures can be
    assembled from several raw labels.  Raises :class:`EmptyRegionError` when
    nothing matches.
    """
    selector = sorted({int(v) for v in labels})
    if not selector:
        raise ValueError("label selector must not be empty")
    selected = np.isin(mask.labels, selector)
    pixel_count = int(selected.sum())
    if pixel_count == 0:
        raise EmptyRegionError(f"no pixels carry labels {selector}")
    _, component_count = ndimage.label(selected, structure=FOUR_CONNECTED)
    loops = _trace_boundary(selected, mask.spacing)
    return Region(
        mask=selected,
        spacing=mask.spacing,
        pixel_count=pixel_count,
        component_count=int(component_count),
        loops=tuple(loops),
    )


def area(region: Region) -> float:
    """Region area in mm^2: pixel count times pixel area."""
    sx, sy = region.spacing
    return region.pixel_count * sx * sy


def contour_area(region: Region) -> float:
    """Net area enclosed by the traced boundary in mm^2, holes subtracted.

    Tracks :func:`area` within a sub-pixel-per-boundary-vertex band; the two
    differ because the boundary polygon cuts pixel corners.
    """
    return float(sum(_signed_area(loop) for loop in region.loops))


def perimeter(region: Region) -> float:
    """Total length of all boundary loops in mm."""
    total = 0.0
    for loop in region.loops:
        deltas = np.roll(loop, -1, axis=0) - loop
        total += float(np.sqrt((deltas * deltas).sum(axis=1)).sum())
    return total


def convex_hull(region: Region) -> Polygon:
    """Convex hull of the region's boundary vertices.

    When every pixel centre is collinear the hull encloses no area; the
    returned polygon is then flagged ``degenerate`` and holds just the extreme
    points of the line.
    """
    ys, xs = np.nonzero(region.mask)
    if _collinear(xs, ys):
        sx, sy = region.spacing
        points = np.column_stack((xs * sx, ys * sy))
        order = np.lexsort((points[:, 1], points[:, 0]))
        ends = points[order[[0, -1]]]
        return Polygon(np.unique(ends, axis=0), degenerate=True)
    points = np.vstack(region.loops)
    hull = _monotone_chain(points)
    return Polygon(hull)


def polygon_area(polygon: Polygon | np.ndarray) -> float:
    """Absolute area enclosed by a closed polygon, via the shoelace formula.

    Degenerate hulls report 0.0.  Raw vertex arrays must hold at least three
    vertices.
    """
    if isinstance(polygon, Polygon):
        if polygon.degenerate:
            return 0.0
        vertices = polygon.vertices
    else:
        vertices = np.asarray(polygon, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if len(vertices) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
    return abs(_signed_area(vertices))


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _trace_boundary(selected: np.ndarray, spacing: tuple[float, float]) -> list[np.ndarray]:
    """Trace closed boundary loops of a boolean raster in physical coordinates."""
    padded = np.pad(selected, 1).astype(float)
    contours = measure.find_contours(padded, 0.5, fully_connected="low")
    sx, sy = spacing
    loops = []
    for rowcol in contours:
        if len(rowcol) > 1 and np.array_equal(rowcol[0], rowcol[-1]):
            rowcol = rowcol[:-1]
        if len(rowcol) < 3:
            continue
        rowcol = _smooth_closed(rowcol - 1.0)  # undo the 1-pixel pad
        loop = np.empty_like(rowcol)
        loop[:, 0] = rowcol[:, 1] * sx  # column -> x
        loop[:, 1] = rowcol[:, 0] * sy  # row -> y
        loops.append(_dedupe_closed(loop))
    # Normalize orientation: the tracer winds all loops consistently, so one
    # global flip makes the net signed area (outer minus holes) positive.
    if sum(_signed_area(loop) for loop in loops) < 0.0:
        loops = [loop[::-1].copy() for loop in loops]
    return loops


def _smooth_closed(vertices: np.ndarray, passes: int = _SMOOTHING_PASSES) -> np.ndarray:
    """Cyclic (1, 2, 1)/4 vertex relaxation; straight runs are fixed points."""
    for _ in range(passes):
        vertices = (np.roll(vertices, 1, axis=0) + 2.0 * vertices + np.roll(vertices, -1, axis=0)) * 0.25
    return vertices


def _dedupe_closed(vertices: np.ndarray) -> np.ndarray:
    """Drop vertices identical to their cyclic predecessor."""
    keep = np.any(vertices != np.roll(vertices, 1, axis=0), axis=1)
    return vertices[keep] if keep.sum() >= 3 else vertices


def _signed_area(vertices: np.ndarray) -> float:
    """Shoelace signed area; positive for counter-clockwise winding."""
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _collinear(xs: np.ndarray, ys: np.ndarray) -> bool:
    """Whether all pixel centres lie on one line (exact integer arithmetic)."""
    if len(xs) < 3:
        return True
    dx = xs.astype(np.int64) - int(xs[0])
    dy = ys.astype(np.int64) - int(ys[0])
    nonzero = np.nonzero((dx != 0) | (dy != 0))[0]
    if len(nonzero) == 0:
        return True
    base = nonzero[0]
    return bool(np.all(dx[base] * dy - dy[base] * dx == 0))


def _monotone_chain(points: np.ndarray) -> np.ndarray:
    """Convex hull of a point cloud, counter-clockwise, no collinear vertices."""
    unique = np.unique(points, axis=0)  # lexicographic sort by (x, y)
    if len(unique) < 3:
        raise ValueError("need at least 3 distinct points for a hull")

    def build(candidates) -> list[np.ndarray]:
        chain: list[np.ndarray] = []
        for p in candidates:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0.0:
                chain.pop()
            chain.append(p)
        return chain

    lower = build(unique)
    upper = build(unique[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise ValueError("hull is degenerate: all points are collinear")
    if _signed_area(hull) < 0.0:
        hull = hull[::-1]
    return hull


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))
