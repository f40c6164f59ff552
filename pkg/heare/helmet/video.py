"""
Frame sequences and median background estimation.
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from heare.helmet.core import CHALLENGE_FPS
from heare.helmet.imaging import FRAME_NAME_TEMPLATE, ImageBuffer, load_image
from heare.helmet.rng import SplitMix64

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNT = 25
BACKGROUND_FILENAME = "background.ppm"

_FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.ppm$")


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSequence:
    frames: Tuple[Path, ...]
    fps: float = CHALLENGE_FPS

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(Path(p) for p in self.frames))
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @classmethod
    def from_directory(
        cls, directory: Union[str, Path], fps: float = CHALLENGE_FPS
    ) -> "FrameSequence":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"Frame directory {directory} does not exist")
        frames = sorted(p for p in directory.iterdir() if _FRAME_PATTERN.match(p.name))
        if not frames:
            raise ValueError(f"No {FRAME_NAME_TEMPLATE} files found in {directory}")
        return cls(tuple(frames), fps)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps

    def frame_path(self, index: int) -> Path:
        """1-based, aligned with FrameAddress.frame."""
        if not 1 <= index <= len(self.frames):
            raise IndexError(f"Frame {index} out of range 1..{len(self.frames)}")
        return self.frames[index - 1]

    def load(self, indices: Sequence[int]) -> List[ImageBuffer]:
        images = [load_image(self.frame_path(i)) for i in indices]
        _check_same_dims(images)
        return images


def _check_same_dims(frames: Sequence[ImageBuffer]) -> None:
    if not frames:
        raise ValueError("Need at least one frame")
    first = frames[0].dims
    for i, frame in enumerate(frames[1:], start=2):
        if frame.dims != first:
            raise FrameMismatchError(
                f"Frame {i} is {frame.width}x{frame.height}, "
                f"expected {first.width}x{first.height}"
            )


def sample_frame_indices(total: int, k: int, seed: int) -> List[int]:
    """k distinct 1-based frame indices, uniform without replacement, ascending."""
    if total < 1:
        raise ValueError(f"total must be positive, got {total}")
    if not 1 <= k <= total:
        raise ValueError(f"Cannot sample {k} frames out of {total}")
    return sorted(SplitMix64(seed).sample(list(range(1, total + 1)), k))


def median_background(frames: Sequence[ImageBuffer]) -> ImageBuffer:
    """
    Per-pixel, per-channel median of the frames; for an even count the lower
    of the two middle values.

    Bisects the 256 histogram bins one bit at a time from the high bit down:
    the cumulative count below a candidate bin is tallied in a uint16 counter,
    and the candidate is kept while fewer than ``rank`` samples lie below it.
    Memory stays at a few frame-sized arrays however many frames are sampled.
    """
    _check_same_dims(frames)
    n = len(frames)
    if n > np.iinfo(np.uint16).max:
        raise ValueError(f"At most 65535 frames are supported, got {n}")
    shape = frames[0].pixels.shape
    rank = (n - 1) // 2 + 1  # count of values that must be <= the median

    median = np.zeros(shape, dtype=np.uint16)
    candidate = np.empty(shape, dtype=np.uint16)
    below = np.empty(shape, dtype=np.uint16)
    mask = np.empty(shape, dtype=bool)
    for bit in (128, 64, 32, 16, 8, 4, 2, 1):
        np.add(median, bit, out=candidate)
        below.fill(0)
        for frame in frames:
            np.less(frame.pixels, candidate, out=mask)
            below += mask
        np.copyto(median, candidate, where=below < rank)
    logger.debug("Median background over %d frames of %dx%d", n, shape[1], shape[0])
    return ImageBuffer(median.astype(np.uint8))


def estimate_background(
    sequence: FrameSequence, k: int = DEFAULT_SAMPLE_COUNT, seed: int = 0
) -> ImageBuffer:
    """Median of k frames sampled uniformly from the sequence."""
    indices = sample_frame_indices(len(sequence), k, seed)
    logger.info("Estimating background from frames %s", indices)
    return median_background(sequence.load(indices))
