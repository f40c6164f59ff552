"""
Minimal raster engine for 8-bit RGB frames.

Frames are exchanged as binary P6 portable pixmaps; a video is a directory of
``frame_%06d.ppm`` files. Every transform returns a new read-only buffer.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import cv2
import numpy as np

from heare.helmet.core import BoundingBox, FrameDims

logger = logging.getLogger(__name__)

RGB = Tuple[int, int, int]
FRAME_NAME_TEMPLATE = "frame_{:06d}.ppm"

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PPMFormatError(ValueError):
    pass


class BadMagicError(PPMFormatError):
    pass


class UnsupportedMaxvalError(PPMFormatError):
    pass


class TruncatedPixelDataError(PPMFormatError):
    pass


class CropOutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x 3 uint8 raster, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"Expected an HxWx3 array, got shape {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"Image must be at least 1x1, got shape {pixels.shape}")
        if pixels.dtype != np.uint8:
            raise ValueError(f"Expected uint8 pixels, got {pixels.dtype}")
        pixels = np.ascontiguousarray(pixels)
        if pixels.flags.writeable:
            pixels = pixels.copy()
            pixels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> FrameDims:
        return FrameDims(self.width, self.height)

    @classmethod
    def filled(cls, dims: FrameDims, color: RGB) -> "ImageBuffer":
        pixels = np.empty((dims.height, dims.width, 3), dtype=np.uint8)
        pixels[:, :] = color
        return cls(pixels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


def _read_header_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    while pos < len(data):
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PPMFormatError("Unexpected end of PPM header")
    return data[start:pos], pos


def read_ppm(data: bytes) -> ImageBuffer:
    if data[:2] != b"P6" or len(data) < 3 or data[2] not in _WHITESPACE:
        raise BadMagicError(f"Not a binary P6 pixmap (magic {data[:3]!r})")
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        token, pos = _read_header_token(data, pos)
        if not token.isdigit():
            raise PPMFormatError(f"Invalid PPM {name}: {token!r}")
        values.append(int(token))
    width, height, maxval = values
    if maxval != 255:
        raise UnsupportedMaxvalError(f"Only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise PPMFormatError(f"Invalid PPM dimensions {width}x{height}")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PPMFormatError("PPM header must end with a single whitespace byte")
    pos += 1

    expected = width * height * 3
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise TruncatedPixelDataError(
            f"PPM declares {width}x{height} ({expected} bytes) but only "
            f"{len(payload)} bytes of pixel data follow"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(pixels)


def write_ppm(img: ImageBuffer) -> bytes:
    header = f"P6 {img.width} {img.height} 255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_image(path: Union[str, Path]) -> ImageBuffer:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return read_ppm(data)
    except PPMFormatError as e:
        raise type(e)(f"{path}: {e}") from None


def save_image(img: ImageBuffer, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(write_ppm(img))


def flip_horizontal(img: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(img.pixels[:, ::-1])


def rotate90(img: ImageBuffer, quarter_turns: int) -> ImageBuffer:
    """Rotate counter-clockwise by quarter_turns x 90 degrees."""
    if quarter_turns not in (0, 1, 2, 3):
        raise ValueError(f"quarter_turns must be in 0..3, got {quarter_turns}")
    return ImageBuffer(np.rot90(img.pixels, k=quarter_turns, axes=(0, 1)))


def rotate_arbitrary(img: ImageBuffer, angle_degrees: float, fill: RGB) -> ImageBuffer:
    """
    Rotate counter-clockwise about the frame centre, keeping the input size.

    Each output pixel centre is mapped back into the source and takes the
    nearest source pixel, or ``fill`` when it lands outside.
    """
    if not math.isfinite(angle_degrees):
        raise ValueError(f"Angle must be finite, got {angle_degrees}")
    theta = math.radians(angle_degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = img.width / 2, img.height / 2

    # output index -> source index; pixel (x, y) has its centre at (x + .5, y + .5)
    ox = cx - 0.5 + (0.5 - cx) * cos_t - (0.5 - cy) * sin_t
    oy = cy - 0.5 + (0.5 - cx) * sin_t + (0.5 - cy) * cos_t
    inverse = np.array([[cos_t, -sin_t, ox], [sin_t, cos_t, oy]], dtype=np.float64)
    out = cv2.warpAffine(
        np.array(img.pixels),
        inverse,
        (img.width, img.height),
        flags=cv2.INTER_NEAREST | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=tuple(float(c) for c in fill),
    )
    return ImageBuffer(out)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at ceil(3 sigma) and renormalised to sum 1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2 * sigma**2))
    return kernel / kernel.sum()


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    kernel = gaussian_kernel(sigma)
    values = cv2.sepFilter2D(
        img.pixels.astype(np.float64),
        -1,
        kernel,
        kernel,
        borderType=cv2.BORDER_REPLICATE,
    )
    return ImageBuffer(_to_uint8(values))


def resize_bilinear(img: ImageBuffer, new_dims: FrameDims) -> ImageBuffer:
    """Bilinear resampling with half-pixel centres and edge clamping."""
    if new_dims == img.dims:
        return img
    values = cv2.resize(
        img.pixels.astype(np.float64),
        (new_dims.width, new_dims.height),
        interpolation=cv2.INTER_LINEAR,
    )
    return ImageBuffer(_to_uint8(values))


def crop(img: ImageBuffer, rect: BoundingBox) -> ImageBuffer:
    coords = (rect.left, rect.top, rect.width, rect.height)
    if any(float(v) != int(v) for v in coords):
        raise CropOutOfBoundsError(f"Crop rectangle must be integral: {rect}")
    left, top, width, height = (int(v) for v in coords)
    if left < 0 or top < 0 or left + width > img.width or top + height > img.height:
        raise CropOutOfBoundsError(
            f"Crop {left},{top} {width}x{height} exceeds image {img.width}x{img.height}"
        )
    return ImageBuffer(img.pixels[top : top + height, left : left + width])
