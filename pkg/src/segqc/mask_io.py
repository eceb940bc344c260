"""Reading and writing 2D label masks with physical pixel spacing.

Two formats are supported:

* MetaImage (``.mhd`` header + sibling ``.raw``, or single-file ``.mha``),
  restricted to 2D unsigned 8-bit images.  Pixel spacing is carried in the
  header and round-trips exactly.
* Binary PGM (``P5``), a dependency-free interchange format.  PGM carries no
  physical spacing, so reading one assumes 1.0 mm/px and emits
  :class:`SpacingDefaultedWarning`.

Readers never silently truncate or pad: the payload must contain exactly
``width * height`` bytes or :class:`MaskFormatError` is raised.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputFileError

__all__ = [
    "LabelMask",
    "MaskFormatError",
    "SpacingDefaultedWarning",
    "read_mask",
    "write_mask",
]

_SUPPORTED_SUFFIXES = (".mhd", ".mha", ".pgm")


class MaskFormatError(InputFileError):
    """A mask file is unreadable, malformed, or uses unsupported features."""


class SpacingDefaultedWarning(UserWarning):
    """The file format carries no pixel spacing; 1.0 mm/px was assumed."""


@dataclass(frozen=True, eq=False)
class LabelMask:
    """A 2D grid of structure labels plus physical pixel spacing.

    ``labels`` is a ``(height, width)`` uint8 array where 0 is background and
    each non-zero value names one anatomical structure.  ``spacing`` is
    ``(spacing_x, spacing_y)`` in millimetres per pixel.  Instances are
    immutable; the label array is marked read-only.
    """

    labels: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError("labels must be a non-empty 2D array")
        if labels.dtype != np.uint8:
            info = np.iinfo(np.uint8)
            if labels.min() < info.min or labels.max() > info.max:
                raise ValueError("label values must fit in uint8 (0..255)")
            labels = labels.astype(np.uint8)
        else:
            labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

        sx, sy = (float(v) for v in self.spacing)
        if not (math.isfinite(sx) and math.isfinite(sy) and sx > 0 and sy > 0):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")
        object.__setattr__(self, "spacing", (sx, sy))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def label_values(self) -> tuple[int, ...]:
        """Sorted non-zero label values present in the mask."""
        values = np.unique(self.labels)
        return tuple(int(v) for v in values if v != 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.labels, other.labels)


def read_mask(path: str | Path) -> LabelMask:
    """Read a mask file, dispatching on the filename extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".mhd", ".mha"):
        return _read_metaimage(path)
    if suffix == ".pgm":
        return _read_pgm(path)
    raise MaskFormatError(
        f"{path}: unsupported extension {suffix!r} (expected one of {_SUPPORTED_SUFFIXES})"
    )


def write_mask(mask: LabelMask, path: str | Path) -> None:
    """Write a mask, dispatching on the filename extension.

    ``.mha`` stores header and payload in one file, ``.mhd`` writes a sibling
    ``.raw`` next to the header, and ``.pgm`` writes a binary P5 image.  PGM
    cannot carry spacing; writing a non-unit-spacing mask to PGM emits
    :class:`SpacingDefaultedWarning` because the spacing is lost.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".mha":
            _write_metaimage(mask, path, local=True)
        elif suffix == ".mhd":
            _write_metaimage(mask, path, local=False)
        elif suffix == ".pgm":
            _write_pgm(mask, path)
        else:
            raise MaskFormatError(
                f"{path}: unsupported extension {suffix!r} (expected one of {_SUPPORTED_SUFFIXES})"
            )
    except OSError as exc:
        raise MaskFormatError(f"{path}: cannot write: {exc}") from exc


# ---------------------------------------------------------------------------
# MetaImage
# ---------------------------------------------------------------------------

def _read_metaimage(path: Path) -> LabelMask:
    header: dict[str, str] = {}
    try:
        with open(path, "rb") as fh:
            while True:
                line = fh.readline()
                if not line:
                    raise MaskFormatError(f"{path}: header ended before ElementDataFile")
                try:
                    text = line.decode("ascii").strip()
                except UnicodeDecodeError as exc:
                    raise MaskFormatError(f"{path}: non-ASCII bytes in header") from exc
                if not text:
                    continue
                if "=" not in text:
                    raise MaskFormatError(f"{path}: malformed header line {text!r}")
                key, value = (part.strip() for part in text.split("=", 1))
                header[key] = value
                if key == "ElementDataFile":
                    break
            if header["ElementDataFile"].upper() == "LOCAL":
                payload = fh.read()
            else:
                data_path = path.parent / header["ElementDataFile"]
                try:
                    payload = data_path.read_bytes()
                except OSError as exc:
                    raise MaskFormatError(f"{path}: cannot read payload {data_path}: {exc}") from exc
    except OSError as exc:
        raise MaskFormatError(f"{path}: cannot read: {exc}") from exc

    if header.get("CompressedData", "False").strip().lower() == "true":
        raise MaskFormatError(f"{path}: compressed payloads are not supported")
    if header.get("BinaryData", "True").strip().lower() != "true":
        raise MaskFormatError(f"{path}: ASCII payloads are not supported")

    ndims = _header_int(path, header, "NDims")
    if ndims != 2:
        raise MaskFormatError(f"{path}: only 2D masks are supported, header declares NDims = {ndims}")

    dims = _header_ints(path, header, "DimSize", count=2)
    width, height = dims
    if width <= 0 or height <= 0:
        raise MaskFormatError(f"{path}: DimSize must be positive, got {dims}")

    etype = header.get("ElementType", "").strip()
    if etype != "MET_UCHAR":
        raise MaskFormatError(
            f"{path}: unsupported ElementType {etype!r} (only MET_UCHAR is supported)"
        )

    if "ElementSpacing" in header:
        spacing_values = _header_floats(path, header, "ElementSpacing", count=2)
        spacing = (spacing_values[0], spacing_values[1])
        if spacing[0] <= 0 or spacing[1] <= 0:
            raise MaskFormatError(f"{path}: ElementSpacing must be positive, got {spacing}")
    else:
        spacing = (1.0, 1.0)
        warnings.warn(
            f"{path}: header carries no ElementSpacing, assuming 1.0 mm/px",
            SpacingDefaultedWarning,
            stacklevel=3,
        )

    expected = width * height
    if len(payload) != expected:
        raise MaskFormatError(
            f"{path}: payload is {len(payload)} bytes but header declares "
            f"{width} x {height} = {expected}"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return LabelMask(labels, spacing)


def _write_metaimage(mask: LabelMask, path: Path, *, local: bool) -> None:
    data_file = "LOCAL" if local else path.stem + ".raw"
    sx, sy = mask.spacing
    header = (
        "ObjectType = Image\n"
        "NDims = 2\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        "CompressedData = False\n"
        f"DimSize = {mask.width} {mask.height}\n"
        f"ElementSpacing = {sx!r} {sy!r}\n"
        "ElementType = MET_UCHAR\n"
        f"ElementDataFile = {data_file}\n"
    )
    payload = np.ascontiguousarray(mask.labels).tobytes()
    if local:
        path.write_bytes(header.encode("ascii") + payload)
    else:
        path.write_bytes(header.encode("ascii"))
        (path.parent / data_file).write_bytes(payload)


def _header_int(path: Path, header: dict[str, str], key: str) -> int:
    values = _header_ints(path, header, key, count=1)
    return values[0]


def _header_ints(path: Path, header: dict[str, str], key: str, count: int) -> list[int]:
    if key not in header:
        raise MaskFormatError(f"{path}: missing required header key {key}")
    parts = header[key].split()
    try:
        values = [int(p) for p in parts]
    except ValueError as exc:
        raise MaskFormatError(f"{path}: {key} = {header[key]!r} is not integral") from exc
    if len(values) != count:
        raise MaskFormatError(f"{path}: {key} must hold {count} value(s), got {len(values)}")
    return values


def _header_floats(path: Path, header: dict[str, str], key: str, count: int) -> list[float]:
    parts = header[key].split()
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise MaskFormatError(f"{path}: {key} = {header[key]!r} is not numeric") from exc
    if len(values) != count:
        raise MaskFormatError(f"{path}: {key} must hold {count} value(s), got {len(values)}")
    return values


# ---------------------------------------------------------------------------
# Binary PGM (P5)
# ---------------------------------------------------------------------------

def _read_pgm(path: Path) -> LabelMask:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MaskFormatError(f"{path}: cannot read: {exc}") from exc

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            byte = data[pos : pos + 1]
            if byte == b"#":  # comment runs to end of line
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif byte.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MaskFormatError(f"{path}: truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise MaskFormatError(f"{path}: not a binary PGM (magic {magic!r}, expected b'P5')")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise MaskFormatError(f"{path}: non-numeric PGM header field") from exc
    if width <= 0 or height <= 0:
        raise MaskFormatError(f"{path}: PGM dimensions must be positive, got {width} x {height}")
    if not 0 < maxval <= 255:
        raise MaskFormatError(f"{path}: unsupported PGM maxval {maxval} (only 8-bit supported)")

    pos += 1  # exactly one whitespace byte separates maxval from the payload
    payload = data[pos:]
    expected = width * height
    if len(payload) != expected:
        raise MaskFormatError(
            f"{path}: payload is {len(payload)} bytes but header declares "
            f"{width} x {height} = {expected}"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    warnings.warn(
        f"{path}: PGM carries no pixel spacing, assuming 1.0 mm/px",
        SpacingDefaultedWarning,
        stacklevel=3,
    )
    return LabelMask(labels, (1.0, 1.0))


def _write_pgm(mask: LabelMask, path: Path) -> None:
    if mask.spacing != (1.0, 1.0):
        warnings.warn(
            f"{path}: PGM cannot store pixel spacing; {mask.spacing} will read back as 1.0 mm/px",
            SpacingDefaultedWarning,
            stacklevel=3,
        )
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    path.write_bytes(header + np.ascontiguousarray(mask.labels).tobytes())
