"""Wrap-aware binary morphology on ERP masks.

The left and right image borders are the same meridian, and the row above
the first row is the first row itself seen across the pole (shifted by half
the width). Every operation pads with that topology before handing the
array to OpenCV, then crops back.
"""

import logging

from functools import lru_cache

import cv2
import numpy as np


logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def disc(radius: int) -> np.ndarray:
    """Disc-shaped structuring element of the given radius (radius 0 is a single pixel)."""
    radius = max(0, int(radius))
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * radius + 1, 2 * radius + 1))
    kernel.setflags(write=False)
    return kernel


def pad_sphere(image: np.ndarray, pad: int) -> np.ndarray:
    """Pad an (H, W[, C]) array by ``pad`` pixels following sphere topology.

    Rows beyond the poles are mirrored and rolled by W/2; columns wrap.
    ``pad`` is limited to the image height and width.
    """
    height, width = image.shape[:2]
    pad = int(min(pad, height, width))
    if pad <= 0:
        return np.ascontiguousarray(image)
    half = width // 2
    top = np.roll(image[:pad][::-1], half, axis=1)
    bottom = np.roll(image[-pad:][::-1], half, axis=1)
    tall = np.concatenate([top, image, bottom], axis=0)
    return np.ascontiguousarray(np.concatenate([tall[:, -pad:], tall, tall[:, :pad]], axis=1))


def _crop(padded: np.ndarray, pad: int, shape) -> np.ndarray:
    height, width = shape[:2]
    pad = int(min(pad, height, width))
    if pad <= 0:
        return padded
    return padded[pad:pad + height, pad:pad + width]


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilate a boolean mask with a disc, wrapping in longitude."""
    mask = np.asarray(mask, dtype=bool)
    if radius <= 0:
        return mask.copy()
    padded = pad_sphere(mask.astype(np.uint8), radius)
    grown = cv2.dilate(padded, disc(radius))
    return _crop(grown, radius, mask.shape).astype(bool)


def close(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological closing (dilation then erosion) with a disc, wrapping in longitude."""
    mask = np.asarray(mask, dtype=bool)
    if radius <= 0:
        return mask.copy()
    pad = 2 * radius
    padded = pad_sphere(mask.astype(np.uint8), pad)
    closed = cv2.morphologyEx(padded, cv2.MORPH_CLOSE, disc(radius))
    return _crop(closed, pad, mask.shape).astype(bool)


def boundary(mask: np.ndarray) -> np.ndarray:
    """Pixels of the mask with at least one unset 8-neighbour (wrap-aware)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros_like(mask)
    padded = pad_sphere(mask.astype(np.uint8), 1)
    eroded = _crop(cv2.erode(padded, np.ones((3, 3), np.uint8)), 1, mask.shape).astype(bool)
    return mask & ~eroded
