"""Search-region extraction (tau) and inverse lifting of local predictions (tau^-1)."""

import logging
import math

from dataclasses import dataclass
from typing import Optional, Union

import cv2
import numpy as np

from omnitrack import morphology
from omnitrack.errors import BoxOutsideError, DimensionMismatchError, DomainError
from omnitrack.regions import (
    BBox,
    BFoV,
    RBBox,
    RepresentationKind,
    Representations,
    SamplingGrid,
    as_mask,
    as_rbbox,
    ebfov_grid,
    fit_bfov,
    points_to_bbox,
    points_to_rbbox,
)
from omnitrack.sphere_geom import ErpSize


logger = logging.getLogger(__name__)

DEFAULT_LOCAL_SIZE = 512
DEFAULT_BOX_SAMPLES = 64

# Source padding for bilinear lookups that straddle the seam or a pole.
_SOURCE_PAD = 2


@dataclass(frozen=True)
class LocalImage:
    """A local image together with the grid that produced it."""

    pixels: np.ndarray
    grid: SamplingGrid

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def validate_erp_image(img: np.ndarray) -> ErpSize:
    """Check an (H, W[, C]) ERP image and return its size."""
    img = np.asarray(img)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3, 4)):
        raise DimensionMismatchError(f"ERP images must be (H, W) or (H, W, C) with C in 1, 3, 4, got shape {img.shape}")
    return ErpSize.of(img)


def extract_region(
    img: np.ndarray,
    b: BFoV,
    out_w: int = DEFAULT_LOCAL_SIZE,
    out_h: int = DEFAULT_LOCAL_SIZE,
    extended: bool = True,
) -> LocalImage:
    """Remap the eBFoV region of ``b`` into an ``out_w`` x ``out_h`` local image.

    Sampling is bilinear, wraps horizontally and continues over the poles
    (a row above the top edge is the top row seen from the opposite meridian).
    """
    size = validate_erp_image(img)
    grid = ebfov_grid(b, out_w, out_h, size, extended=extended)
    return LocalImage(pixels=sample_grid(img, grid), grid=grid)


def sample_grid(img: np.ndarray, grid: SamplingGrid, interpolation: int = cv2.INTER_LINEAR) -> np.ndarray:
    size = validate_erp_image(img)
    if size != grid.size:
        raise DimensionMismatchError(f"Image size {size} does not match grid size {grid.size}")
    # Sample from a copy rolled by whole columns so that the grid centre sits
    # mid-image. A yaw of k columns changes only the roll, never the maps.
    anchor = int(np.floor(grid.u[grid.rows // 2, grid.cols // 2]))
    offset = size.width // 2 - anchor
    u = np.mod(grid.u + offset, size.width)
    padded = morphology.pad_sphere(np.roll(np.asarray(img), offset, axis=1), _SOURCE_PAD)
    # pixel centres sit at index + 0.5 in continuous coordinates
    map_x = (u - 0.5 + _SOURCE_PAD).astype(np.float32)
    map_y = (grid.v - 0.5 + _SOURCE_PAD).astype(np.float32)
    return cv2.remap(padded, map_x, map_y, interpolation, borderMode=cv2.BORDER_REPLICATE)


def _nearest_indices(grid: SamplingGrid):
    cols = np.mod(np.floor(grid.u).astype(np.int64), grid.size.width)
    rows = np.clip(np.floor(grid.v).astype(np.int64), 0, grid.size.height - 1)
    return rows, cols


def extract_mask(mask: np.ndarray, grid: SamplingGrid) -> np.ndarray:
    """Nearest-neighbour sampling of a binary ERP mask through ``grid``."""
    mask = as_mask(mask)
    if mask.shape != grid.size.shape:
        raise DimensionMismatchError(f"Mask shape {mask.shape} does not match grid size {grid.size}")
    rows, cols = _nearest_indices(grid)
    return mask[rows, cols]


def default_dilation_radius(size: ErpSize, local_width: int) -> int:
    return int(math.ceil(size.width / local_width))


def lift_mask(local: np.ndarray, grid: SamplingGrid, size: ErpSize, dilation_radius: Optional[int] = None) -> np.ndarray:
    """Scatter a local mask onto the ERP frame and close the scatter holes.

    Each set local pixel lands on the ERP pixel containing its grid
    coordinate; the result is then closed with a disc of
    ``dilation_radius`` (default: ``ceil(W / local_width)``), wrapping in
    longitude.
    """
    local = as_mask(local)
    if local.shape != grid.shape:
        raise DimensionMismatchError(f"Local mask shape {local.shape} does not match grid shape {grid.shape}")
    if size != grid.size:
        raise DimensionMismatchError(f"ERP size {size} does not match grid size {grid.size}")
    lifted = np.zeros(size.shape, dtype=bool)
    if not local.any():
        return lifted
    rows, cols = _nearest_indices(grid)
    lifted[rows[local], cols[local]] = True
    radius = default_dilation_radius(size, grid.cols) if dilation_radius is None else int(dilation_radius)
    return morphology.close(lifted, radius)


def local_box_from_mask(mask: np.ndarray) -> BBox:
    """Axis-aligned box of a local mask (no wrap on local images)."""
    mask = as_mask(mask)
    x, y, w, h = cv2.boundingRect(mask.astype(np.uint8))
    if w == 0 or h == 0:
        raise DomainError("Cannot box an empty local mask")
    return BBox(x + 0.5 * w, y + 0.5 * h, float(w), float(h))


def _box_samples(local_box: Union[BBox, RBBox], grid: SamplingGrid, samples: int):
    box = as_rbbox(local_box)
    corners = box.corners()
    if (corners[:, 0].max() <= 0 or corners[:, 0].min() >= grid.cols
            or corners[:, 1].max() <= 0 or corners[:, 1].min() >= grid.rows):
        raise BoxOutsideError(f"Local box {box} lies outside the {grid.cols}x{grid.rows} local image")
    e1, e2 = box.axes()
    steps = np.linspace(-0.5, 0.5, max(2, samples))
    s, t = np.meshgrid(steps, steps)
    x = box.cx + s * box.w * e1[0] + t * box.h * e2[0]
    y = box.cy + s * box.w * e1[1] + t * box.h * e2[1]
    return np.clip(x, 0.0, grid.cols).ravel(), np.clip(y, 0.0, grid.rows).ravel()


def lift_box(
    local_box: Union[BBox, RBBox],
    grid: SamplingGrid,
    size: ErpSize,
    target: RepresentationKind,
    samples: int = DEFAULT_BOX_SAMPLES,
) -> Union[BBox, RBBox, BFoV]:
    """Lift a local box to one global representation.

    The box's filled region is sampled on a ``samples`` x ``samples``
    lattice (clamped to the local image) and the mapped points are boxed
    or FoV-fitted the same way masks are.
    """
    if size != grid.size:
        raise DimensionMismatchError(f"ERP size {size} does not match grid size {grid.size}")
    kind = RepresentationKind(target)
    x, y = _box_samples(local_box, grid, samples)
    if kind in (RepresentationKind.BFOV, RepresentationKind.RBFOV):
        return fit_bfov(grid.directions_at(x, y), rotated=kind is RepresentationKind.RBFOV)
    u, v = grid.pixels_at(x, y)
    if kind is RepresentationKind.BBOX:
        return points_to_bbox(u, v, size)
    return points_to_rbbox(u, v, size)


def lift_box_all(local_box: Union[BBox, RBBox], grid: SamplingGrid, size: ErpSize, samples: int = DEFAULT_BOX_SAMPLES) -> Representations:
    """All four global representations of a local box."""
    x, y = _box_samples(local_box, grid, samples)
    directions = grid.directions_at(x, y)
    u, v = grid.pixels_at(x, y)
    return Representations(
        bbox=points_to_bbox(u, v, size),
        rbbox=points_to_rbbox(u, v, size),
        bfov=fit_bfov(directions, rotated=False),
        rbfov=fit_bfov(directions, rotated=True),
    )


__all__ = [
    "LocalImage",
    "default_dilation_radius",
    "extract_mask",
    "extract_region",
    "lift_box",
    "lift_box_all",
    "lift_mask",
    "local_box_from_mask",
    "sample_grid",
    "validate_erp_image",
]
