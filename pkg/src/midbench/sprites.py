"""Procedural 64x64 binary sprite rendering over a discrete latent grid.

Latents follow the classic disentanglement grid: 3 shapes, 6 scales mapping to
[0.5, 1.0], 40 orientations over [0, 2pi), and 32 x/y positions over [0, 1].
"""

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

IMAGE_SIZE = 64
N_SCALES = 6
N_ORIENTATIONS = 40
N_POSITIONS = 32

# Largest shape has a bounding-box half-width of (0.5 + 0.1*5) * 8 = 8 px, so
# centers are mapped into [MARGIN, IMAGE_SIZE - MARGIN] to keep it in frame.
SCALE_UNIT_PX = 8.0
MARGIN_PX = 8.0

# Bounding box of the heart region (x^2+y^2-1)^3 - x^2 y^3 <= 0 is
# x in [-1.139, 1.139], y in [-1.0, 1.236]; local coords are rescaled so the
# rendered heart is centered and spans the same box as the other shapes.
_HEART_HALF_W = 1.139
_HEART_HALF_H = 1.118
_HEART_Y_SHIFT = 0.118

# Oval axis ratio 2:3 (narrow semi-axis / wide semi-axis).
_OVAL_RATIO = 2.0 / 3.0


class Shape(IntEnum):
    SQUARE = 0
    OVAL = 1
    HEART = 2


class Spurious(IntEnum):
    LEFT = 0
    MIDDLE = 1
    RIGHT = 2


# The biased sampling regime pairs each shape with one image segment.
CANONICAL_SEGMENT = {
    Shape.SQUARE: Spurious.LEFT,
    Shape.OVAL: Spurious.MIDDLE,
    Shape.HEART: Spurious.RIGHT,
}


@dataclass(frozen=True)
class LatentPoint:
    shape: Shape
    scale_idx: int
    orientation_idx: int
    pos_x_idx: int
    pos_y_idx: int

    def __post_init__(self):
        if not 0 <= self.scale_idx < N_SCALES:
            raise ValueError(f"scale_idx {self.scale_idx} out of range")
        if not 0 <= self.orientation_idx < N_ORIENTATIONS:
            raise ValueError(f"orientation_idx {self.orientation_idx} out of range")
        if not 0 <= self.pos_x_idx < N_POSITIONS:
            raise ValueError(f"pos_x_idx {self.pos_x_idx} out of range")
        if not 0 <= self.pos_y_idx < N_POSITIONS:
            raise ValueError(f"pos_y_idx {self.pos_y_idx} out of range")

    @property
    def scale(self) -> float:
        return 0.5 + 0.1 * self.scale_idx

    @property
    def orientation(self) -> float:
        return 2.0 * math.pi * self.orientation_idx / N_ORIENTATIONS

    @property
    def pos_x(self) -> float:
        return self.pos_x_idx / (N_POSITIONS - 1)

    @property
    def pos_y(self) -> float:
        return self.pos_y_idx / (N_POSITIONS - 1)


def spurious_attribute_of(pos_x_idx: int) -> Spurious:
    """Image segment for a position index: thirds of normalized pos_x, middle half-open."""
    if not 0 <= pos_x_idx < N_POSITIONS:
        raise ValueError(f"pos_x_idx {pos_x_idx} out of range 0..{N_POSITIONS - 1}")
    value = pos_x_idx / (N_POSITIONS - 1)
    if value < 1.0 / 3.0:
        return Spurious.LEFT
    if value < 2.0 / 3.0:
        return Spurious.MIDDLE
    return Spurious.RIGHT


SEGMENT_INDICES = {
    seg: np.array([i for i in range(N_POSITIONS) if spurious_attribute_of(i) == seg], dtype=np.int64)
    for seg in Spurious
}

# Pixel-center coordinate grids, shared by every render call.
_COORDS = (np.arange(IMAGE_SIZE, dtype=np.float64) + 0.5)
_PX = np.broadcast_to(_COORDS[None, :], (IMAGE_SIZE, IMAGE_SIZE))
_PY = np.broadcast_to(_COORDS[:, None], (IMAGE_SIZE, IMAGE_SIZE))


def center_px(pos_idx: int) -> float:
    """Map a position index to a pixel-space center coordinate."""
    value = pos_idx / (N_POSITIONS - 1)
    return MARGIN_PX + value * (IMAGE_SIZE - 2 * MARGIN_PX)


def render_sprite(latents: LatentPoint) -> np.ndarray:
    """Render a latent point to a 64x64 uint8 image with values {0, 1}.

    A pixel is foreground iff its center lies inside the shape. Rotation is
    counter-clockwise in image coordinates with y pointing up.
    """
    cx = center_px(latents.pos_x_idx)
    cy = center_px(latents.pos_y_idx)
    s = latents.scale * SCALE_UNIT_PX
    theta = latents.orientation
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    dx = (_PX - cx) / s
    dy = (cy - _PY) / s  # flip so +v is up
    u = cos_t * dx + sin_t * dy
    v = -sin_t * dx + cos_t * dy

    if latents.shape == Shape.SQUARE:
        inside = np.maximum(np.abs(u), np.abs(v)) <= 1.0
    elif latents.shape == Shape.OVAL:
        inside = u * u + (v / _OVAL_RATIO) ** 2 <= 1.0
    else:
        hx = u * _HEART_HALF_W
        hy = v * _HEART_HALF_H + _HEART_Y_SHIFT
        inside = (hx * hx + hy * hy - 1.0) ** 3 - (hx * hx) * (hy * hy * hy) <= 0.0
    return inside.astype(np.uint8)


def downsample_2x(images: np.ndarray) -> np.ndarray:
    """Average-pool images 2x for the reduced 32x32 input mode. Returns float32."""
    n, h, w = images.shape
    x = images.reshape(n, h // 2, 2, w // 2, 2).astype(np.float32)
    return x.mean(axis=(2, 4))
