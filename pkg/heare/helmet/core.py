"""
Shared domain types for the helmet-violation toolkit: the seven-class schema,
frame addressing, boxes, detections and the box geometry everything else uses.
"""

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple

CHALLENGE_FRAME_WIDTH = 1920
CHALLENGE_FRAME_HEIGHT = 1080
CHALLENGE_FPS = 10
CHALLENGE_MAX_FRAME = 200  # 20 s at 10 fps


class ClassId(IntEnum):
    MOTORCYCLE = 1
    DRIVER_WITH_HELMET = 2
    DRIVER_NO_HELMET = 3
    PASSENGER1_WITH_HELMET = 4
    PASSENGER1_NO_HELMET = 5
    PASSENGER2_WITH_HELMET = 6
    PASSENGER2_NO_HELMET = 7

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class FrameDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"Frame dimensions must be positive, got {self.width}x{self.height}"
            )


CHALLENGE_DIMS = FrameDims(CHALLENGE_FRAME_WIDTH, CHALLENGE_FRAME_HEIGHT)


@dataclass(frozen=True, order=True)
class FrameAddress:
    video_id: int
    frame: int

    def __post_init__(self):
        if self.video_id < 1:
            raise ValueError(f"video_id must be >= 1, got {self.video_id}")
        if self.frame < 1:
            raise ValueError(f"frame must be >= 1, got {self.frame}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in continuous pixel units, (left, top) corner plus size."""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        if not all(
            math.isfinite(v) for v in (self.left, self.top, self.width, self.height)
        ):
            raise ValueError(f"Box coordinates must be finite: {self}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"Box width and height must be positive, got {self.width}x{self.height}"
            )

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> Tuple[float, float, float, float]:
        return self.left, self.top, self.right, self.bottom

    @classmethod
    def from_corners(
        cls, x1: float, y1: float, x2: float, y2: float
    ) -> Optional["BoundingBox"]:
        """Build a box from corner pairs; None when the rectangle has no area."""
        if x2 <= x1 or y2 <= y1:
            return None
        return cls(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class Detection:
    addr: FrameAddress
    box: BoundingBox
    class_id: ClassId
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "class_id", ClassId(self.class_id))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Confidence must be in [0, 1], got {self.confidence}")

    def rank_key(self) -> Tuple[float, float, float]:
        """Descending confidence, ties broken by (left, top) ascending."""
        return -self.confidence, self.box.left, self.box.top


@dataclass(frozen=True)
class GroundTruthRecord:
    addr: FrameAddress
    box: BoundingBox
    class_id: ClassId

    def __post_init__(self):
        object.__setattr__(self, "class_id", ClassId(self.class_id))


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.right, b.right) - max(a.left, b.left)
    h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    return min(1.0, inter / (a.area + b.area - inter))


def box_inside(box: BoundingBox, dims: FrameDims, tolerance: float = 0.0) -> bool:
    return (
        box.left >= -tolerance
        and box.top >= -tolerance
        and box.right <= dims.width + tolerance
        and box.bottom <= dims.height + tolerance
    )


def clip_box(box: BoundingBox, dims: FrameDims) -> Optional[BoundingBox]:
    """Intersect a box with the frame [0, W] x [0, H]; None when nothing is left."""
    if box_inside(box, dims):
        return box
    return BoundingBox.from_corners(
        max(box.left, 0.0),
        max(box.top, 0.0),
        min(box.right, float(dims.width)),
        min(box.bottom, float(dims.height)),
    )


def to_normalized_center(
    box: BoundingBox, dims: FrameDims
) -> Tuple[float, float, float, float]:
    return (
        (box.left + box.width / 2) / dims.width,
        (box.top + box.height / 2) / dims.height,
        box.width / dims.width,
        box.height / dims.height,
    )


def from_normalized_center(
    cx: float, cy: float, w: float, h: float, dims: FrameDims
) -> BoundingBox:
    for name, value in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"Normalized {name} must be in [0, 1], got {value}")
    width = w * dims.width
    height = h * dims.height
    return BoundingBox(
        cx * dims.width - width / 2, cy * dims.height - height / 2, width, height
    )
