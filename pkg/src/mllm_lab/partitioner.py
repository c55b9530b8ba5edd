"""Grid partitioning for high-resolution images.

An image is resized minimally and cut into a cols x rows grid of slices,
each sized as close as possible to the encoder's pretraining resolution
(448 x 448 by default). Grid selection scores every feasible grid by how
far the slice shape strays from square and how far the slice area strays
from the pretraining area, both on a log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

ENCODER_SIDE = 448
DEFAULT_MAX_SLICES = 9
DEFAULT_TOKENS_PER_SLICE = 64


@dataclass(frozen=True)
class ImageGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InputError(
                f"image geometry must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class PartitionPlan:
    grid_cols: int
    grid_rows: int
    slice_width: int
    slice_height: int
    score: float
    tokens_per_slice: int

    @property
    def num_slices(self) -> int:
        return self.grid_cols * self.grid_rows

    @property
    def total_tokens(self) -> int:
        return self.num_slices * self.tokens_per_slice

    @property
    def resized_size(self) -> tuple[int, int]:
        """(width, height) of the resized image the grid tiles exactly."""
        return (self.slice_width * self.grid_cols, self.slice_height * self.grid_rows)


def ideal_slice_count(
    g: ImageGeometry, base: int = ENCODER_SIDE, max_slices: int = DEFAULT_MAX_SLICES
) -> int:
    """Slice count whose total area best matches the input resolution.

    round(w*h / base^2), clamped to [1, max_slices]. Uses Python's
    banker's rounding at exact halves.
    """
    if base <= 0:
        raise InputError("base side length must be positive")
    n = round(g.width * g.height / (base * base))
    return max(1, min(n, max_slices))


def candidate_grids(max_slices: int) -> list[tuple[int, int]]:
    """All (cols, rows) grids with cols*rows <= max_slices."""
    return [
        (c, r)
        for c in range(1, max_slices + 1)
        for r in range(1, max_slices + 1)
        if c * r <= max_slices
    ]


def partition_score(
    g: ImageGeometry,
    cols: int,
    rows: int,
    base: int = ENCODER_SIDE,
    area_weight: float = 1.0,
) -> float:
    """Deviation of a grid's slice shape and area from the base setting.

    |log(slice aspect)| + area_weight * |log(slice area / base^2)|; zero
    iff slices are exactly base x base.
    """
    slice_w = g.width / cols
    slice_h = g.height / rows
    return abs(math.log(slice_w / slice_h)) + area_weight * abs(
        math.log(slice_w * slice_h / (base * base))
    )


def select_partition(
    g: ImageGeometry,
    base: int = ENCODER_SIDE,
    max_slices: int = DEFAULT_MAX_SLICES,
    tokens_per_slice: int = DEFAULT_TOKENS_PER_SLICE,
) -> PartitionPlan:
    """Pick the minimum-score grid among all grids up to max_slices.

    Ties break toward fewer slices, then a squarer grid (smaller
    |cols - rows|), then fewer columns, making the choice deterministic.
    Slice pixel sizes are ceil(width/cols) x ceil(height/rows), so the
    resized image is never smaller than the original along either axis.
    """
    if max_slices < 1:
        raise InputError("max_slices must be >= 1")
    best = min(
        candidate_grids(max_slices),
        key=lambda cr: (
            partition_score(g, cr[0], cr[1], base=base),
            cr[0] * cr[1],
            abs(cr[0] - cr[1]),
            cr[0],
        ),
    )
    cols, rows = best
    return PartitionPlan(
        grid_cols=cols,
        grid_rows=rows,
        slice_width=math.ceil(g.width / cols),
        slice_height=math.ceil(g.height / rows),
        score=partition_score(g, cols, rows, base=base),
        tokens_per_slice=tokens_per_slice,
    )


def slice_image(pixels: np.ndarray, plan: PartitionPlan) -> list[np.ndarray]:
    """Cut an image buffer into the plan's slices, row-major.

    The buffer is bilinearly resized to (slice_width*cols,
    slice_height*rows) first; when that already equals the buffer size
    no resampling happens and slices are bit-exact crops.
    """
    if pixels.ndim not in (2, 3) or pixels.dtype != np.uint8:
        raise InputError("expected a uint8 (H, W) or (H, W, C) buffer")
    h, w = pixels.shape[:2]
    geom = ImageGeometry(width=w, height=h)
    if math.ceil(geom.width / plan.grid_cols) != plan.slice_width or math.ceil(
        geom.height / plan.grid_rows
    ) != plan.slice_height:
        raise InputError(
            f"plan {plan.grid_cols}x{plan.grid_rows} with slice "
            f"{plan.slice_width}x{plan.slice_height} does not match a "
            f"{w}x{h} buffer"
        )
    target_w, target_h = plan.resized_size
    if (target_w, target_h) != (w, h):
        pixels = _resize_bilinear(pixels, target_w, target_h)
    slices = []
    for row in range(plan.grid_rows):
        for col in range(plan.grid_cols):
            y0 = row * plan.slice_height
            x0 = col * plan.slice_width
            slices.append(
                pixels[y0 : y0 + plan.slice_height, x0 : x0 + plan.slice_width].copy()
            )
    return slices


def _resize_bilinear(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    from PIL import Image

    if pixels.ndim == 3 and pixels.shape[2] not in (1, 3):
        raise InputError(f"unsupported channel count {pixels.shape[2]}")
    squeeze = pixels.ndim == 3 and pixels.shape[2] == 1
    img = Image.fromarray(pixels[..., 0] if squeeze else pixels)
    resized = np.asarray(img.resize((width, height), Image.BILINEAR))
    if squeeze:
        resized = resized[..., np.newaxis]
    return resized
