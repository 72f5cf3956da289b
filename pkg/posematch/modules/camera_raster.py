# modules/camera_raster.py

"""
Pinhole camera helpers, the detection zoom-in and raster utilities.

A detection box is first widened to 4:3, then the region it covers is cropped
and resized to 640x480 (bilinear for RGB, nearest for masks). The ZoomTransform
returned alongside maps original-frame pixel coordinates into the zoomed frame.
Pixel (i, j) covers the continuous square [j, j+1) x [i, i+1); its center is at
(j + 0.5, i + 0.5).
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from PIL import Image as PILImage
from scipy import ndimage

from posematch.config import DEPTH_GUESS, ZOOM
from posematch.core.exceptions import (
    BBoxLargerThanImage,
    BBoxOutOfBounds,
    EmptyMask,
    ValidationError,
    handle_exceptions,
    validate_input,
    PoseMatchError,
)
from posematch.core.model import BBox, CameraIntrinsics, Image, Mask, Observation

logger = logging.getLogger(__name__)

BOUNDS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ZoomTransform:
    """Affine map u' = scale * u + offset from the original frame to the zoomed frame."""
    scale_x: float
    scale_y: float
    offset_x: float
    offset_y: float

    def __post_init__(self):
        if not (self.scale_x > 0 and self.scale_y > 0):
            raise ValidationError("ZoomTransform scales must be positive")

    @classmethod
    def from_bbox(cls, b: BBox, out_width: int = ZOOM['width'], out_height: int = ZOOM['height']) -> "ZoomTransform":
        sx = out_width / b.w
        sy = out_height / b.h
        return cls(scale_x=sx, scale_y=sy, offset_x=-b.x * sx, offset_y=-b.y * sy)

    def apply(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([p[:, 0] * self.scale_x + self.offset_x,
                         p[:, 1] * self.scale_y + self.offset_y], axis=1)

    def inverse(self) -> "ZoomTransform":
        return ZoomTransform(scale_x=1.0 / self.scale_x, scale_y=1.0 / self.scale_y,
                             offset_x=-self.offset_x / self.scale_x,
                             offset_y=-self.offset_y / self.scale_y)

    def compose(self, inner: "ZoomTransform") -> "ZoomTransform":
        """self after inner: a zoom of an already-zoomed frame."""
        return ZoomTransform(scale_x=self.scale_x * inner.scale_x, scale_y=self.scale_y * inner.scale_y,
                             offset_x=self.scale_x * inner.offset_x + self.offset_x,
                             offset_y=self.scale_y * inner.offset_y + self.offset_y)

    def apply_inverse(self, points) -> np.ndarray:
        """Map zoomed-frame points back into the original frame."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([(p[:, 0] - self.offset_x) / self.scale_x,
                         (p[:, 1] - self.offset_y) / self.scale_y], axis=1)


def expand_bbox_to_ratio(b: BBox, ratio_w_h: float = ZOOM['aspect_ratio'],
                         bounds: Tuple[int, int] = (ZOOM['width'], ZOOM['height'])) -> BBox:
    """
    Grow a box symmetrically about its center until w / h == ratio_w_h.

    The box is never shrunk. If the grown box sticks out of the image it is
    translated back inside; BBoxLargerThanImage when it cannot fit at all.
    """
    width, height = bounds
    cx, cy = b.center
    if b.w / b.h >= ratio_w_h:
        new_w, new_h = b.w, b.w / ratio_w_h
    else:
        new_w, new_h = b.h * ratio_w_h, b.h
    if new_w > width + BOUNDS_TOLERANCE or new_h > height + BOUNDS_TOLERANCE:
        raise BBoxLargerThanImage(
            f"A {ratio_w_h:.4f} box around {b} needs {new_w:.1f}x{new_h:.1f} px, image is {width}x{height}")
    x = cx - new_w / 2.0
    y = cy - new_h / 2.0
    x = min(max(x, 0.0), max(width - new_w, 0.0))
    y = min(max(y, 0.0), max(height - new_h, 0.0))
    return BBox(x, y, new_w, new_h)


def _check_crop(shape: Tuple[int, int], b: BBox) -> None:
    height, width = shape
    if (b.x < -BOUNDS_TOLERANCE or b.y < -BOUNDS_TOLERANCE
            or b.x2 > width + BOUNDS_TOLERANCE or b.y2 > height + BOUNDS_TOLERANCE):
        raise BBoxOutOfBounds(f"Crop box {b} leaves the {width}x{height} image")
    if abs(b.w / b.h - ZOOM['aspect_ratio']) > ZOOM['ratio_tolerance'] * ZOOM['aspect_ratio']:
        raise ValidationError(f"Crop box {b} is not 4:3; call expand_bbox_to_ratio first")


def _source_grid(transform: ZoomTransform, out_width: int, out_height: int) -> Tuple[np.ndarray, np.ndarray]:
    """Continuous original-frame coordinates of every zoomed pixel center."""
    centers_x = np.arange(out_width) + 0.5
    centers_y = np.arange(out_height) + 0.5
    src_x = (centers_x - transform.offset_x) / transform.scale_x
    src_y = (centers_y - transform.offset_y) / transform.scale_y
    return src_x, src_y


def _bilinear_taps(src: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower and upper neighbour indices plus upper weight along one axis, edges clamped."""
    # Pixel-center convention: continuous u samples array index u - 0.5
    pos = np.clip(src - 0.5, 0.0, size - 1)
    lower = np.floor(pos).astype(np.int64)
    upper = np.minimum(lower + 1, size - 1)
    return lower, upper, pos - lower


def zoom_crop(img: Image, b: BBox) -> Tuple[Image, ZoomTransform]:
    """Crop the 4:3 box b out of img and resize it to 640x480 with bilinear sampling."""
    _check_crop(img.pixels.shape[:2], b)
    transform = ZoomTransform.from_bbox(b)
    src_x, src_y = _source_grid(transform, ZOOM['width'], ZOOM['height'])
    x0, x1, wx = _bilinear_taps(src_x, img.width)
    y0, y1, wy = _bilinear_taps(src_y, img.height)
    # Interpolação separável: primeiro em x dentro de cada linha, depois em y
    pixels = img.pixels.astype(np.float64)
    wx = wx[None, :, None]
    upper_rows, lower_rows = pixels[y0], pixels[y1]
    top = upper_rows[:, x0] * (1.0 - wx) + upper_rows[:, x1] * wx
    bottom = lower_rows[:, x0] * (1.0 - wx) + lower_rows[:, x1] * wx
    wy = wy[:, None, None]
    blended = top * (1.0 - wy) + bottom * wy
    return Image(np.clip(np.rint(blended), 0, 255).astype(np.uint8)), transform


def zoom_mask(m: Mask, b: BBox) -> Mask:
    """Same crop as zoom_crop, nearest-neighbour so the mask stays boolean."""
    _check_crop(m.bits.shape, b)
    transform = ZoomTransform.from_bbox(b)
    src_x, src_y = _source_grid(transform, ZOOM['width'], ZOOM['height'])
    cols = np.clip(np.floor(src_x).astype(np.int64), 0, m.width - 1)
    rows = np.clip(np.floor(src_y).astype(np.int64), 0, m.height - 1)
    return Mask(m.bits[np.ix_(rows, cols)])


def zoom_observation(img: Image, m: Mask, detection: BBox) -> Observation:
    """Widen a detection to 4:3 and zoom both rasters into an Observation."""
    crop = expand_bbox_to_ratio(detection, bounds=(img.width, img.height))
    zoomed, _ = zoom_crop(img, crop)
    return Observation(rgb=zoomed, mask=zoom_mask(m, crop), crop=crop)


def infer_translation_from_bbox(b: BBox, cam: CameraIntrinsics, depth_guess: float) -> Tuple[float, float, float]:
    """Back-project the box center to the given depth."""
    if not depth_guess > 0:
        raise ValidationError(f"Depth guess must be positive, got {depth_guess}")
    cx, cy = b.center
    return (depth_guess * (cx - cam.px) / cam.fx,
            depth_guess * (cy - cam.py) / cam.fy,
            float(depth_guess))


def estimate_depth_from_bbox(b: BBox, diameter: float, cam: CameraIntrinsics,
                             z_range: Tuple[float, float] = (DEPTH_GUESS['z_min'], DEPTH_GUESS['z_max'])) -> float:
    """Similar-triangles depth guess: an object of this diameter spans the box diagonal."""
    z_min, z_max = z_range
    depth = diameter * cam.fx / b.diagonal
    return float(min(max(depth, z_min), z_max))


@validate_input(lambda m, k: k >= 0, "Dilation kernel size must be non-negative")
def dilate_mask(m: Mask, k: int) -> Mask:
    """Dilate with a square of side 2*floor(k/2)+1; k=0 and k=1 leave the mask unchanged."""
    side = 2 * (int(k) // 2) + 1
    if side == 1:
        return Mask(m.bits.copy())
    # O quadrado é separável: uma passagem vertical e outra horizontal
    bits = ndimage.binary_dilation(m.bits, structure=np.ones((side, 1), dtype=bool))
    return Mask(ndimage.binary_dilation(bits, structure=np.ones((1, side), dtype=bool)))


def bbox_from_mask(m: Mask) -> BBox:
    """Tight axis-aligned box around the true pixels."""
    rows = np.flatnonzero(m.bits.any(axis=1))
    cols = np.flatnonzero(m.bits.any(axis=0))
    if len(rows) == 0:
        raise EmptyMask("Cannot take the bounding box of an empty mask")
    x0, x1 = int(cols[0]), int(cols[-1])
    y0, y1 = int(rows[0]), int(rows[-1])
    return BBox(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


# Raster and box IO

@handle_exceptions(PoseMatchError, "Error writing PPM image")
def write_ppm(img: Image, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    PILImage.fromarray(img.pixels).save(path, format='PPM')


@handle_exceptions(PoseMatchError, "Error writing PGM mask")
def write_pgm(m: Mask, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    PILImage.fromarray(m.bits.astype(np.uint8) * 255).save(path, format='PPM')


@handle_exceptions(PoseMatchError, "Error reading PPM image")
def read_ppm(path: str) -> Image:
    with PILImage.open(path) as im:
        return Image(np.asarray(im.convert('RGB')))


@handle_exceptions(PoseMatchError, "Error reading PGM mask")
def read_pgm(path: str) -> Mask:
    with PILImage.open(path) as im:
        return Mask(np.asarray(im.convert('L')) > 127)


@handle_exceptions(PoseMatchError, "Error writing boxes CSV")
def write_bboxes_csv(boxes: List[BBox], path: str) -> None:
    frame = pd.DataFrame([{'x': b.x, 'y': b.y, 'w': b.w, 'h': b.h} for b in boxes],
                         columns=['x', 'y', 'w', 'h'])
    frame.to_csv(path, index=False)


@handle_exceptions(PoseMatchError, "Error reading boxes CSV")
def read_bboxes_csv(path: str) -> List[BBox]:
    frame = pd.read_csv(path)
    return [BBox(float(r.x), float(r.y), float(r.w), float(r.h)) for r in frame.itertuples(index=False)]


__all__ = [
    'ZoomTransform', 'expand_bbox_to_ratio', 'zoom_crop', 'zoom_mask', 'zoom_observation',
    'infer_translation_from_bbox', 'estimate_depth_from_bbox', 'dilate_mask', 'bbox_from_mask',
    'write_ppm', 'write_pgm', 'read_ppm', 'read_pgm', 'write_bboxes_csv', 'read_bboxes_csv',
]
