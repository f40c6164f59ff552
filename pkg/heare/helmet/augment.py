"""
Bounding-box-aware augmentation (flip, rotate, blur, mosaic) and the seeded
train/validation split.

Labels travel with their image as a sidecar text file next to the pixmap
(``frame.ppm`` / ``frame.txt``), one ``class cx cy w h`` line per box in
normalized centre form with a zero-based class index, the layout YOLO-style
trainers read.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from heare.helmet.core import (
    BoundingBox,
    ClassId,
    FrameDims,
    box_inside,
    clip_box,
    from_normalized_center,
    to_normalized_center,
)
from heare.helmet.imaging import (
    RGB,
    ImageBuffer,
    flip_horizontal,
    gaussian_blur,
    load_image,
    resize_bilinear,
    rotate90,
    rotate_arbitrary,
    save_image,
)
from heare.helmet.rng import SplitMix64

logger = logging.getLogger(__name__)

T = TypeVar("T")

LabeledBox = Tuple[BoundingBox, ClassId]

DEFAULT_MIN_BOX_VISIBILITY = 0.25
# corner arithmetic after clipping can overshoot the frame edge by an ulp
_EDGE_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class LabeledSample:
    image: ImageBuffer
    boxes: Tuple[LabeledBox, ...] = ()

    def __post_init__(self):
        boxes = tuple((box, ClassId(class_id)) for box, class_id in self.boxes)
        dims = self.image.dims
        for box, _ in boxes:
            if not box_inside(box, dims, _EDGE_TOLERANCE):
                raise ValueError(
                    f"Box {box} is not inside the {dims.width}x{dims.height} image"
                )
        object.__setattr__(self, "boxes", boxes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return self.image == other.image and self.boxes == other.boxes


class MosaicConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_dims: FrameDims
    min_box_visibility: float = Field(DEFAULT_MIN_BOX_VISIBILITY, ge=0.0, le=1.0)
    seed: int = Field(ge=0, lt=2**64)


def _settle(
    boxes: Sequence[Tuple[BoundingBox, ClassId]],
    dims: FrameDims,
    reference_areas: Optional[Sequence[float]] = None,
    min_visibility: float = 0.0,
) -> Tuple[LabeledBox, ...]:
    """Clip boxes to the frame, dropping empty ones and slivers below min_visibility."""
    kept = []
    for i, (box, class_id) in enumerate(boxes):
        clipped = clip_box(box, dims)
        if clipped is None:
            continue
        if reference_areas is not None and clipped.area / reference_areas[i] < min_visibility:
            continue
        kept.append((clipped, class_id))
    return tuple(kept)


def augment_flip(sample: LabeledSample) -> LabeledSample:
    width = sample.image.width
    boxes = [
        (BoundingBox(width - box.left - box.width, box.top, box.width, box.height), c)
        for box, c in sample.boxes
    ]
    return LabeledSample(
        flip_horizontal(sample.image), _settle(boxes, sample.image.dims)
    )


def _rotate_box_ccw(box: BoundingBox, width: int) -> BoundingBox:
    return BoundingBox(box.top, width - box.left - box.width, box.height, box.width)


def augment_rotate(sample: LabeledSample, quarter_turns: int) -> LabeledSample:
    image = rotate90(sample.image, quarter_turns)
    boxes = list(sample.boxes)
    width = sample.image.width
    height = sample.image.height
    for _ in range(quarter_turns):
        boxes = [(_rotate_box_ccw(box, width), c) for box, c in boxes]
        width, height = height, width
    return LabeledSample(image, _settle(boxes, image.dims))


def rotated_hull(box: BoundingBox, dims: FrameDims, angle_degrees: float) -> BoundingBox:
    """Axis-aligned hull of a box's corners rotated counter-clockwise about the frame centre."""
    theta = math.radians(angle_degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = dims.width / 2, dims.height / 2
    xs, ys = [], []
    for x, y in (
        (box.left, box.top),
        (box.right, box.top),
        (box.left, box.bottom),
        (box.right, box.bottom),
    ):
        dx, dy = x - cx, y - cy
        xs.append(cx + dx * cos_t + dy * sin_t)
        ys.append(cy - dx * sin_t + dy * cos_t)
    return BoundingBox(min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))


def augment_rotate_arbitrary(
    sample: LabeledSample,
    angle_degrees: float,
    fill: RGB = (0, 0, 0),
    min_box_visibility: float = DEFAULT_MIN_BOX_VISIBILITY,
) -> LabeledSample:
    image = rotate_arbitrary(sample.image, angle_degrees, fill)
    dims = sample.image.dims
    hulls = [(rotated_hull(box, dims, angle_degrees), c) for box, c in sample.boxes]
    boxes = _settle(hulls, dims, [hull.area for hull, _ in hulls], min_box_visibility)
    logger.debug(
        "Rotated %d boxes by %s degrees, kept %d", len(hulls), angle_degrees, len(boxes)
    )
    return LabeledSample(image, boxes)


def augment_blur(sample: LabeledSample, sigma: float) -> LabeledSample:
    return LabeledSample(gaussian_blur(sample.image, sigma), sample.boxes)


def mosaic_offset(cfg: MosaicConfig, rng: Optional[SplitMix64] = None) -> Tuple[int, int]:
    """Top-left corner of the mosaic crop, uniform over every valid position."""
    rng = rng or SplitMix64(cfg.seed)
    x = rng.randbelow(cfg.target_dims.width + 1)
    y = rng.randbelow(cfg.target_dims.height + 1)
    return x, y


def mosaic(
    samples: Sequence[LabeledSample],
    cfg: MosaicConfig,
    rng: Optional[SplitMix64] = None,
) -> LabeledSample:
    """
    Tile four samples (top-left, top-right, bottom-left, bottom-right) on a
    2W x 2H canvas, each resized to the target size, and cut a W x H crop.
    """
    if len(samples) != 4:
        raise ValueError(f"Mosaic needs exactly 4 samples, got {len(samples)}")
    dims = cfg.target_dims
    width, height = dims.width, dims.height
    ox, oy = mosaic_offset(cfg, rng)

    canvas = np.zeros((2 * height, 2 * width, 3), dtype=np.uint8)
    shifted: List[LabeledBox] = []
    areas: List[float] = []
    for i, sample in enumerate(samples):
        qx, qy = (i % 2) * width, (i // 2) * height
        canvas[qy : qy + height, qx : qx + width] = resize_bilinear(
            sample.image, dims
        ).pixels
        sx = width / sample.image.width
        sy = height / sample.image.height
        for box, class_id in sample.boxes:
            scaled = BoundingBox(
                box.left * sx + qx - ox,
                box.top * sy + qy - oy,
                box.width * sx,
                box.height * sy,
            )
            shifted.append((scaled, class_id))
            areas.append(scaled.area)

    image = ImageBuffer(canvas[oy : oy + height, ox : ox + width])
    boxes = _settle(shifted, dims, areas, cfg.min_box_visibility)
    logger.debug(
        "Mosaic crop at (%d, %d) kept %d of %d boxes", ox, oy, len(boxes), len(shifted)
    )
    return LabeledSample(image, boxes)


def split_dataset(
    manifest: Sequence[T], val_fraction: float, seed: int
) -> Tuple[List[T], List[T]]:
    """
    Shuffle with SplitMix64 Fisher-Yates and take the first floor(n * val_fraction)
    items as the validation set.
    """
    if not manifest:
        raise ValueError("Cannot split an empty manifest")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    items = list(manifest)
    SplitMix64(seed).shuffle(items)
    n_val = math.floor(len(items) * Fraction(str(val_fraction)))
    return items[n_val:], items[:n_val]


def read_labels(text: str, dims: FrameDims) -> Tuple[LabeledBox, ...]:
    boxes = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise ValueError(f"Label line {line_no}: expected 5 fields, got {len(fields)}")
        class_id = ClassId(int(fields[0]) + 1)
        cx, cy, w, h = (float(v) for v in fields[1:])
        boxes.append((from_normalized_center(cx, cy, w, h, dims), class_id))
    return _settle(boxes, dims)


def write_labels(boxes: Sequence[LabeledBox], dims: FrameDims) -> str:
    lines = []
    for box, class_id in boxes:
        cx, cy, w, h = to_normalized_center(box, dims)
        lines.append(f"{int(class_id) - 1} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
    return "".join(line + "\n" for line in lines)


def labels_path(image_path: Union[str, Path]) -> Path:
    return Path(image_path).with_suffix(".txt")


def load_sample(image_path: Union[str, Path]) -> LabeledSample:
    """Load a pixmap and its sidecar labels; a missing sidecar means no boxes."""
    image = load_image(image_path)
    sidecar = labels_path(image_path)
    boxes: Tuple[LabeledBox, ...] = ()
    if sidecar.exists():
        try:
            boxes = read_labels(sidecar.read_text(), image.dims)
        except ValueError as e:
            raise ValueError(f"{sidecar}: {e}") from None
    return LabeledSample(image, boxes)


def save_sample(sample: LabeledSample, image_path: Union[str, Path]) -> None:
    save_image(sample.image, image_path)
    labels_path(image_path).write_text(write_labels(sample.boxes, sample.image.dims))
