"""Binary pixel masks, the COCO-style RLE codec, and geometric primitives.

Masks are row-major boolean grids. RLE uses the COCO uncompressed convention:
column-major scan, alternating zero/one run lengths, first count is the number
of leading zero pixels (possibly 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage


class MalformedRle(ValueError):
    """RLE counts do not describe a mask of the declared size."""


class DimensionMismatch(ValueError):
    """Two masks (or a mask and its image) disagree on height/width."""


class InvalidBox(ValueError):
    """Bounding box falls outside its image frame or has empty extent."""


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A height x width boolean pixel grid."""

    height: int
    width: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {self.height}x{self.width}")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(f"bits shape {bits.shape} != ({self.height}, {self.width})")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, arr: Any) -> "BinaryMask":
        a = np.asarray(arr, dtype=bool)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-D array, got ndim={a.ndim}")
        return cls(a.shape[0], a.shape[1], a)

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, np.zeros((height, width), dtype=bool))

    @classmethod
    def ones(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, np.ones((height, width), dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.height, self.width, self.bits.tobytes()))


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoding of a binary mask."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {self.height}x{self.width}")
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise MalformedRle("counts must not be empty")
        if any(c < 0 for c in counts):
            raise MalformedRle(f"negative run length in {counts}")
        if any(c == 0 for c in counts[1:]):
            raise MalformedRle("zero-length run allowed only in leading position")
        total = sum(counts)
        if total != self.height * self.width:
            raise MalformedRle(
                f"counts sum {total} != {self.height}x{self.width} = {self.height * self.width}"
            )

    @property
    def area(self) -> int:
        """Number of set pixels (sum of the one-runs)."""
        return sum(self.counts[1::2])

    def to_json(self) -> dict[str, Any]:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRle(f"bad RLE object: {obj!r}") from exc
        return cls(int(h), int(w), tuple(counts))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box: (x, y) top-left corner, w x h extent."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise InvalidBox(f"box extent must be >= 1, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidBox(f"box origin must be >= 0, got x={self.x} y={self.y}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def check_frame(self, height: int, width: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise InvalidBox(
                f"box {self} exceeds {height}x{width} frame"
            )


def rle_encode(mask: BinaryMask) -> RleMask:
    """Encode a mask as COCO uncompressed RLE (column-major runs)."""
    flat = mask.bits.ravel(order="F")
    # Sentinel diff trick: run boundaries are where the value changes.
    padded = np.concatenate(([np.int8(-1)], flat.view(np.int8), [np.int8(-1)]))
    boundaries = np.flatnonzero(np.diff(padded))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(mask.height, mask.width, tuple(counts))


def rle_decode(rle: RleMask) -> BinaryMask:
    """Decode COCO uncompressed RLE back into a mask. Inverse of rle_encode."""
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    bits = flat.reshape((rle.height, rle.width), order="F")
    return BinaryMask(rle.height, rle.width, bits)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union. Two empty masks have IOU 1.0 by convention."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a.bits, b.bits).sum())
    return inter / union


def _structure(radius: int) -> np.ndarray:
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    side = 2 * radius + 1
    return np.ones((side, side), dtype=bool)


def erode(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological erosion with a square (2r+1)^2 element; outside frame is zero."""
    structure = _structure(radius)
    if radius == 0:
        return mask
    out = ndimage.binary_erosion(mask.bits, structure=structure, border_value=0)
    return BinaryMask(mask.height, mask.width, out)


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological dilation with a square (2r+1)^2 element; outside frame is zero."""
    structure = _structure(radius)
    if radius == 0:
        return mask
    out = ndimage.binary_dilation(mask.bits, structure=structure, border_value=0)
    return BinaryMask(mask.height, mask.width, out)


def connected_components(mask: BinaryMask) -> tuple[int, np.ndarray]:
    """Label 4-connected components. Returns (count, per-pixel label grid).

    Labels are 1..count on set pixels and 0 on background.
    """
    labels, count = ndimage.label(mask.bits)
    return int(count), labels


def invert(mask: BinaryMask) -> BinaryMask:
    return BinaryMask(mask.height, mask.width, ~mask.bits)


def area(mask: BinaryMask) -> int:
    return int(mask.bits.sum())


def box_to_mask(box: BBox, height: int, width: int) -> BinaryMask:
    """Rasterize a filled box into a mask of the given frame."""
    box.check_frame(height, width)
    bits = np.zeros((height, width), dtype=bool)
    bits[box.y : box.y + box.h, box.x : box.x + box.w] = True
    return BinaryMask(height, width, bits)


def intersect_box_mask(box: BBox, mask: BinaryMask) -> int:
    """Count of set mask pixels inside the box."""
    box.check_frame(mask.height, mask.width)
    return int(mask.bits[box.y : box.y + box.h, box.x : box.x + box.w].sum())
