"""Target representations and extended bounding field-of-view (eBFoV) regions.

Four representations describe a target on an ERP frame:

* ``BBox``  - axis-aligned box on the image plane ``[cx, cy, w, h]``
* ``RBBox`` - rotated box ``[cx, cy, w, h, gamma]``
* ``BFoV``  - angular region ``[clon, clat, theta, phi, gamma]`` on the sphere
  (``gamma != 0`` is the rotated variant, rBFoV)

A BFoV region is the surface ``Omega`` rotated by
``R_y(clon) R_x(clat) R_z(gamma)`` and projected onto the image. ``Omega`` is
the tangent plane while both extents are below 90 degrees and the spherical
surface otherwise (the "extended" BFoV), which keeps regions beyond 180
degrees representable.
"""

import enum
import logging
import math

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np

from omnitrack import morphology
from omnitrack.errors import DegenerateMaskError, DimensionMismatchError, DomainError, EmptyMaskError
from omnitrack.sphere_geom import (
    HALF_PI,
    TWO_PI,
    ErpSize,
    LonLat,
    bfov_rotation,
    lonlat_to_pixels_array,
    normalize_lon,
    pixel_center_lonlat,
    pixel_center_vectors,
    rot_x,
    rot_y,
    vec_to_lonlat_array,
)


logger = logging.getLogger(__name__)

TANGENT_LIMIT = math.radians(90.0)

# Edge snapping for rotation angles that should read as zero.
_GAMMA_EPS = 1e-9


class RepresentationKind(str, enum.Enum):
    BBOX = "bbox"
    RBBOX = "rbbox"
    BFOV = "bfov"
    RBFOV = "rbfov"


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"BBox.{name} must be finite, got {getattr(self, name)!r}")
        if self.w <= 0 or self.h <= 0:
            raise DomainError(f"BBox size must be positive, got w={self.w!r}, h={self.h!r}")

    @property
    def gamma(self) -> float:
        return 0.0

    @property
    def center(self) -> Tuple[float, float]:
        return self.cx, self.cy

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_rbbox(self) -> "RBBox":
        return RBBox(self.cx, self.cy, self.w, self.h, 0.0)


@dataclass(frozen=True)
class RBBox:
    """Rotated box; canonical form keeps ``w >= h`` and ``gamma`` in [0, pi).

    ``gamma`` is the angle of the ``w`` axis measured from +u towards +v.
    """

    cx: float
    cy: float
    w: float
    h: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"RBBox.{name} must be finite, got {getattr(self, name)!r}")
        if self.w < 0 or self.h < 0:
            raise DomainError(f"RBBox size must be non-negative, got w={self.w!r}, h={self.h!r}")
        w, h, gamma = float(self.w), float(self.h), float(self.gamma)
        if h > w:
            w, h, gamma = h, w, gamma + HALF_PI
        period = HALF_PI if w == h else math.pi
        gamma = math.fmod(gamma, period)
        if gamma < 0:
            gamma += period
        if gamma > period - _GAMMA_EPS:
            gamma = 0.0
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "gamma", gamma)

    @property
    def center(self) -> Tuple[float, float]:
        return self.cx, self.cy

    @property
    def area(self) -> float:
        return self.w * self.h

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.gamma), math.sin(self.gamma)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """Corner points (4, 2) in a consistent winding order."""
        e1, e2 = self.axes()
        center = np.array([self.cx, self.cy])
        half_w = 0.5 * self.w * e1
        half_h = 0.5 * self.h * e2
        return np.stack([
            center - half_w - half_h,
            center + half_w - half_h,
            center + half_w + half_h,
            center - half_w + half_h,
        ])

    def shifted(self, dx: float) -> "RBBox":
        return RBBox(self.cx + dx, self.cy, self.w, self.h, self.gamma)


Box = Union[BBox, RBBox]


def as_rbbox(box: Box) -> RBBox:
    return box.as_rbbox() if isinstance(box, BBox) else box


@dataclass(frozen=True)
class BFoV:
    """Bounding field-of-view; angles in radians. ``gamma`` is 0 for plain BFoV."""

    clon: float
    clat: float
    theta: float
    phi: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("clon", "clat", "theta", "phi", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"BFoV.{name} must be finite, got {getattr(self, name)!r}")
        if not 0.0 < self.theta <= TWO_PI + 1e-12:
            raise DomainError(f"BFoV theta must lie in (0, 2pi], got {self.theta!r}")
        if not 0.0 < self.phi <= math.pi + 1e-12:
            raise DomainError(f"BFoV phi must lie in (0, pi], got {self.phi!r}")
        if abs(self.clat) > HALF_PI + 1e-12:
            raise DomainError(f"BFoV clat must lie in [-pi/2, pi/2], got {self.clat!r}")
        object.__setattr__(self, "clon", normalize_lon(self.clon))
        object.__setattr__(self, "clat", max(-HALF_PI, min(HALF_PI, float(self.clat))))
        object.__setattr__(self, "theta", min(float(self.theta), TWO_PI))
        object.__setattr__(self, "phi", min(float(self.phi), math.pi))
        object.__setattr__(self, "gamma", normalize_lon(self.gamma))

    @classmethod
    def from_degrees(cls, clon: float, clat: float, theta: float, phi: float, gamma: float = 0.0) -> "BFoV":
        return cls(math.radians(clon), math.radians(clat), math.radians(theta), math.radians(phi), math.radians(gamma))

    def degrees(self) -> Tuple[float, float, float, float, float]:
        return tuple(math.degrees(value) for value in (self.clon, self.clat, self.theta, self.phi, self.gamma))  # type: ignore

    @property
    def center(self) -> LonLat:
        return LonLat(self.clon, self.clat)

    def rotation(self) -> np.ndarray:
        return bfov_rotation(self.clon, self.clat, self.gamma)


Representation = Union[BBox, RBBox, BFoV]


@dataclass(frozen=True)
class Representations:
    bbox: BBox
    rbbox: RBBox
    bfov: BFoV
    rbfov: BFoV

    def get(self, kind: RepresentationKind) -> Representation:
        return getattr(self, RepresentationKind(kind).value)


@dataclass
class AnnotationRecord:
    """One frame of annotations or results; any representation may be missing."""

    frame: int
    bbox: Optional[BBox] = None
    rbbox: Optional[RBBox] = None
    bfov: Optional[BFoV] = None
    rbfov: Optional[BFoV] = None
    mask: Optional[np.ndarray] = None
    mask_path: Optional[Path] = None

    def get(self, kind: RepresentationKind) -> Optional[Representation]:
        return getattr(self, RepresentationKind(kind).value)


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

def uses_tangent_plane(theta: float, phi: float, extended: bool = True) -> bool:
    """Surface selection: tangent plane iff both extents are strictly below 90 degrees."""
    if not extended:
        if theta >= math.pi or phi >= math.pi:
            raise DomainError(
                f"Tangent-plane BFoV is undefined at 180 degrees or more, got theta={math.degrees(theta):.3f}, "
                f"phi={math.degrees(phi):.3f} degrees"
            )
        return True
    return theta < TANGENT_LIMIT and phi < TANGENT_LIMIT


def _half_extents(theta: float, phi: float, tangent: bool) -> Tuple[float, float]:
    if tangent:
        return math.tan(0.5 * theta), math.tan(0.5 * phi)
    return 0.5 * theta, 0.5 * phi


def _surface_points(p: np.ndarray, q: np.ndarray, tangent: bool) -> np.ndarray:
    """Unit directions for surface parameters; ``q`` grows downwards in the local image."""
    p, q = np.broadcast_arrays(np.asarray(p, np.float64), np.asarray(q, np.float64))
    if tangent:
        points = np.stack([p, q, np.ones_like(p)], axis=-1)
        return points / np.linalg.norm(points, axis=-1, keepdims=True)
    elevation = -q
    cos_el = np.cos(elevation)
    return np.stack([cos_el * np.sin(p), -np.sin(elevation), cos_el * np.cos(p)], axis=-1)


def _check_counts(nx: int, ny: int) -> None:
    if nx < 2 or ny < 2:
        raise DomainError(f"Surface grids need at least 2x2 samples, got {nx}x{ny}")


def tangent_surface(theta: float, phi: float, nx: int, ny: int) -> np.ndarray:
    """Normalised points of the tangent plane z = 1, shape (ny, nx, 3)."""
    if not (0.0 < theta < math.pi and 0.0 < phi < math.pi):
        raise DomainError(
            f"Tangent plane requires 0 < theta, phi < 180 degrees, got {math.degrees(theta):.3f}, {math.degrees(phi):.3f}"
        )
    _check_counts(nx, ny)
    half_x, half_y = _half_extents(theta, phi, True)
    xs = np.linspace(-half_x, half_x, nx)
    ys = np.linspace(-half_y, half_y, ny)
    return _surface_points(xs[None, :], ys[:, None], True)


def spherical_surface(theta: float, phi: float, nx: int, ny: int) -> np.ndarray:
    """Points of the spherical surface patch, shape (ny, nx, 3).

    Columns sweep the azimuth from -theta/2 to theta/2; rows sweep the
    elevation from +phi/2 (top) to -phi/2 (bottom).
    """
    if not (0.0 < theta <= TWO_PI + 1e-12 and 0.0 < phi <= math.pi + 1e-12):
        raise DomainError(
            "Spherical surface requires 0 < theta <= 360 and 0 < phi <= 180 degrees, "
            f"got {math.degrees(theta):.3f}, {math.degrees(phi):.3f}"
        )
    _check_counts(nx, ny)
    half_x, half_y = _half_extents(theta, phi, False)
    azimuth = np.linspace(-half_x, half_x, nx)
    down = np.linspace(-half_y, half_y, ny)
    return _surface_points(azimuth[None, :], down[:, None], False)


# ---------------------------------------------------------------------------
# Sampling grids and boundaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingGrid:
    """ERP pixel coordinates for every local output pixel.

    ``u`` and ``v`` have shape (rows, cols). Local continuous coordinates
    follow the pixel-centre convention: column ``c`` is centred at
    ``x = c + 0.5`` and corresponds to the c-th surface sample.
    """

    u: np.ndarray
    v: np.ndarray
    size: ErpSize
    bfov: BFoV
    tangent: bool
    rotation: np.ndarray = field(repr=False)

    @property
    def rows(self) -> int:
        return int(self.u.shape[0])

    @property
    def cols(self) -> int:
        return int(self.u.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def _params(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        half_x, half_y = _half_extents(self.bfov.theta, self.bfov.phi, self.tangent)
        s = (np.asarray(x, np.float64) - 0.5) / (self.cols - 1)
        t = (np.asarray(y, np.float64) - 0.5) / (self.rows - 1)
        return -half_x + 2.0 * half_x * s, -half_y + 2.0 * half_y * t

    def directions_at(self, x, y) -> np.ndarray:
        """Sphere directions (..., 3) of continuous local coordinates."""
        p, q = self._params(x, y)
        return _surface_points(p, q, self.tangent) @ self.rotation.T

    def pixels_at(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """ERP pixel coordinates of continuous local coordinates."""
        lon, lat = vec_to_lonlat_array(self.directions_at(x, y))
        return lonlat_to_pixels_array(lon, lat, self.size)


def _project(directions: np.ndarray, size: ErpSize) -> Tuple[np.ndarray, np.ndarray]:
    lon, lat = vec_to_lonlat_array(directions)
    u, v = lonlat_to_pixels_array(lon, lat, size)
    return np.mod(u, size.width), np.clip(v, 0.0, size.height)


def ebfov_grid(b: BFoV, out_w: int, out_h: int, size: ErpSize, extended: bool = True) -> SamplingGrid:
    """Sampling grid of the (extended) BFoV region ``I(b | Omega)``."""
    tangent = uses_tangent_plane(b.theta, b.phi, extended)
    if tangent:
        surface = tangent_surface(b.theta, b.phi, out_w, out_h)
    else:
        surface = spherical_surface(b.theta, b.phi, out_w, out_h)
    rotation = b.rotation()
    u, v = _project(surface @ rotation.T, size)
    u.setflags(write=False)
    v.setflags(write=False)
    logger.debug(
        f"eBFoV grid {out_w}x{out_h} for {tuple(round(d, 3) for d in b.degrees())} "
        f"using the {'tangent plane' if tangent else 'spherical surface'}"
    )
    return SamplingGrid(u=u, v=v, size=size, bfov=b, tangent=tangent, rotation=rotation)


@dataclass(frozen=True)
class BoundaryPolygon:
    """Region outline as continuous pieces, split where it wraps the image border."""

    segments: List[np.ndarray]

    @property
    def closed(self) -> bool:
        return len(self.segments) == 1 and bool(np.allclose(self.segments[0][0], self.segments[0][-1]))

    def points(self) -> np.ndarray:
        return np.concatenate(self.segments, axis=0)


def _edge_params(half_x: float, half_y: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    forward = np.linspace(-1.0, 1.0, n)
    backward = forward[::-1]
    ones = np.ones(n)
    p = np.concatenate([forward, ones[1:], backward[1:], -ones[1:]]) * half_x
    q = np.concatenate([-ones, forward[1:], ones[1:], backward[1:]]) * half_y
    return p, q


def bfov_boundary(b: BFoV, samples_per_edge: Optional[int], size: ErpSize, extended: bool = True) -> BoundaryPolygon:
    """Outline of a BFoV region on the ERP image.

    The four edges of the surface are walked clockwise starting at the
    top-left corner. ``samples_per_edge`` defaults to the image width.
    """
    n = int(samples_per_edge) if samples_per_edge else size.width
    if n < 2:
        raise DomainError(f"samples_per_edge must be at least 2, got {n}")
    tangent = uses_tangent_plane(b.theta, b.phi, extended)
    half_x, half_y = _half_extents(b.theta, b.phi, tangent)
    p, q = _edge_params(half_x, half_y, n)
    u, v = _project(_surface_points(p, q, tangent) @ b.rotation().T, size)
    points = np.stack([u, v], axis=-1)

    jumps = np.nonzero(np.abs(np.diff(u)) > 0.5 * size.width)[0]
    if jumps.size == 0:
        return BoundaryPolygon([points])
    # start the walk right after a wrap so that no piece straddles the seam
    start = int(jumps[0]) + 1
    loop = np.concatenate([points[start:], points[1:start + 1]], axis=0)
    cuts = np.nonzero(np.abs(np.diff(loop[:, 0])) > 0.5 * size.width)[0] + 1
    segments = [segment for segment in np.split(loop, cuts) if len(segment)]
    return BoundaryPolygon(segments)


def bfov_region_mask(b: BFoV, size: ErpSize, extended: bool = True) -> np.ndarray:
    """Rasterise a BFoV region: pixel centres inside ``I(b | Omega)``."""
    tangent = uses_tangent_plane(b.theta, b.phi, extended)
    lon, lat = pixel_center_lonlat(size)
    cos_lat = np.cos(lat)[:, None]
    x = cos_lat * np.sin(lon)[None, :]
    y = np.broadcast_to(-np.sin(lat)[:, None], x.shape)
    z = cos_lat * np.cos(lon)[None, :]
    rotation = b.rotation()
    # row-vector form of R^T p
    xr = rotation[0, 0] * x + rotation[1, 0] * y + rotation[2, 0] * z
    yr = rotation[0, 1] * x + rotation[1, 1] * y + rotation[2, 1] * z
    zr = rotation[0, 2] * x + rotation[1, 2] * y + rotation[2, 2] * z
    if tangent:
        half_x, half_y = _half_extents(b.theta, b.phi, True)
        return (zr > 0) & (np.abs(xr) <= half_x * zr + 1e-12) & (np.abs(yr) <= half_y * zr + 1e-12)
    azimuth = np.arctan2(xr, zr)
    elevation = np.arctan2(-yr, np.hypot(xr, zr))
    return (np.abs(azimuth) <= 0.5 * b.theta + 1e-12) & (np.abs(elevation) <= 0.5 * b.phi + 1e-12)


# ---------------------------------------------------------------------------
# Mask and point-set conversions
# ---------------------------------------------------------------------------

def as_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionMismatchError(f"Masks must be 2-D, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def _require_non_empty(mask: np.ndarray) -> None:
    if not mask.any():
        raise EmptyMaskError("Mask is empty")


def _column_span(occupied: np.ndarray, width: int) -> Tuple[int, int]:
    """First column and width of the narrowest wrap-aware span covering ``occupied``.

    The cut goes through the widest run of empty columns; ties go to the
    leftmost run.
    """
    columns = np.nonzero(occupied)[0]
    if columns.size == width:
        return 0, width
    gaps = np.append(np.diff(columns) - 1, columns[0] + width - columns[-1] - 1)
    starts = np.mod(np.append(columns[:-1] + 1, columns[-1] + 1), width)
    widest = gaps.max()
    candidates = np.nonzero(gaps == widest)[0]
    best = candidates[np.argmin(starts[candidates])]
    first = int((starts[best] + widest) % width)
    return first, int(width - widest)


def _point_span(u: np.ndarray, width: int) -> Tuple[float, float]:
    """Start and width of the narrowest wrap-aware interval covering the points ``u``."""
    ordered = np.sort(np.mod(u, width))
    if ordered.size == 1:
        return float(ordered[0]), 0.0
    gaps = np.append(np.diff(ordered), ordered[0] + width - ordered[-1])
    best = int(np.argmax(gaps))
    start = ordered[(best + 1) % ordered.size]
    return float(start), float(width - gaps[best])


def _unwrap(u: np.ndarray, start: float, width: int) -> np.ndarray:
    u = np.mod(u, width)
    return np.where(u < start, u + width, u)


def mask_to_bbox(m: np.ndarray) -> BBox:
    """Narrowest axis-aligned box containing all mask pixels under longitude wrap."""
    mask = as_mask(m)
    _require_non_empty(mask)
    height, width = mask.shape
    rows = np.nonzero(mask.any(axis=1))[0]
    first, span = _column_span(mask.any(axis=0), width)
    top, bottom = int(rows[0]), int(rows[-1]) + 1
    cx = math.fmod(first + 0.5 * span, width)
    return BBox(cx, 0.5 * (top + bottom), float(span), float(bottom - top))


def _rbbox_from_points(points: np.ndarray, width: int) -> RBBox:
    hull = cv2.convexHull(points.astype(np.float32))
    (cx, cy), _, _ = cv2.minAreaRect(hull)
    corners = cv2.boxPoints(cv2.minAreaRect(hull)).astype(np.float64)
    edge_a = corners[1] - corners[0]
    edge_b = corners[2] - corners[1]
    gamma = math.atan2(edge_a[1], edge_a[0])
    return RBBox(math.fmod(float(cx), width) % width, float(cy),
                 float(np.hypot(*edge_a)), float(np.hypot(*edge_b)), gamma)


def mask_to_rbbox(m: np.ndarray) -> RBBox:
    """Minimum-area rotated rectangle around the mask, after the same wrap cut as :func:`mask_to_bbox`."""
    mask = as_mask(m)
    _require_non_empty(mask)
    width = mask.shape[1]
    first, _ = _column_span(mask.any(axis=0), width)
    rows, cols = np.nonzero(morphology.boundary(mask))
    cols = _unwrap(cols, first, width)
    offsets = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.float64)
    corners = (np.stack([cols, rows], axis=-1)[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    return _rbbox_from_points(corners, width)


def points_to_bbox(u: np.ndarray, v: np.ndarray, size: ErpSize, min_size: float = 1e-6) -> BBox:
    """Narrowest wrap-aware axis-aligned box around continuous ERP points."""
    start, span = _point_span(np.asarray(u, np.float64), size.width)
    top, bottom = float(np.min(v)), float(np.max(v))
    cx = math.fmod(start + 0.5 * span, size.width)
    return BBox(cx, 0.5 * (top + bottom), max(span, min_size), max(bottom - top, min_size))


def points_to_rbbox(u: np.ndarray, v: np.ndarray, size: ErpSize) -> RBBox:
    """Minimum-area rotated rectangle around continuous ERP points."""
    u = np.asarray(u, np.float64)
    start, _ = _point_span(u, size.width)
    points = np.stack([_unwrap(u, start, size.width), np.asarray(v, np.float64)], axis=-1)
    return _rbbox_from_points(points, size.width)


def _extents(local: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Full angular extents (theta, phi) of points given in the BFoV frame (last axis xyz)."""
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    azimuth = np.abs(np.arctan2(x, z))
    elevation = np.abs(np.arctan2(-y, np.hypot(x, z)))
    return 2.0 * azimuth.max(axis=-1), 2.0 * elevation.max(axis=-1)


def fit_bfov(
    vectors: np.ndarray,
    rotated: bool = False,
    candidates: Optional[np.ndarray] = None,
    min_extent: float = 1e-6,
    gamma_step_deg: float = 1.0,
    weights: Optional[np.ndarray] = None,
) -> BFoV:
    """Maximum bounding FoV of a set of sphere directions.

    The centre is the normalised, optionally ``weights``-weighted, mean
    direction. Extents are twice the largest azimuth / elevation of the
    points seen from that centre. When ``rotated``, the roll minimising ``theta * phi`` is searched on a
    ``gamma_step_deg`` grid over [0, 180) using ``candidates`` (defaults to
    all points); ties keep the smallest roll.
    """
    vectors = np.asarray(vectors, np.float64).reshape(-1, 3)
    if vectors.shape[0] == 0:
        raise EmptyMaskError("Cannot fit a BFoV to an empty point set")
    mean = np.average(vectors, axis=0, weights=weights)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-6:
        raise DegenerateMaskError("Mask directions are antipodally balanced; the BFoV centre is undefined")
    clon, clat = (float(value) for value in vec_to_lonlat_array(mean / norm))
    centre_frame = rot_y(clon) @ rot_x(clat)
    local = vectors @ centre_frame

    gamma = 0.0
    if rotated:
        search = local if candidates is None else np.asarray(candidates, np.float64).reshape(-1, 3) @ centre_frame
        gammas = np.deg2rad(np.arange(0.0, 180.0, gamma_step_deg))
        cos_g, sin_g = np.cos(gammas)[:, None], np.sin(gammas)[:, None]
        spun = np.stack([
            search[None, :, 0] * cos_g + search[None, :, 1] * sin_g,
            -search[None, :, 0] * sin_g + search[None, :, 1] * cos_g,
            np.broadcast_to(search[None, :, 2], (gammas.size, search.shape[0])),
        ], axis=-1)
        thetas, phis = _extents(spun)
        gamma = float(gammas[int(np.argmin(thetas * phis))])
        c, s = math.cos(gamma), math.sin(gamma)
        local = np.stack([local[:, 0] * c + local[:, 1] * s, -local[:, 0] * s + local[:, 1] * c, local[:, 2]], axis=-1)

    theta, phi = _extents(local)
    return BFoV(clon, clat, max(float(theta), min_extent), max(float(phi), min_extent), gamma)


def mask_to_bfov(m: np.ndarray, size: ErpSize, rotated: bool = False, solid_angle: bool = False) -> BFoV:
    """Maximum bounding FoV of a mask (rBFoV when ``rotated``).

    The centre is the normalised mean of the pixel-centre directions. With
    ``solid_angle`` each pixel counts with its cos(lat) area instead, which
    keeps caps near the poles from pulling the centre polewards.
    """
    mask = as_mask(m)
    if mask.shape != size.shape:
        raise DimensionMismatchError(f"Mask shape {mask.shape} does not match ERP size {size}")
    _require_non_empty(mask)
    rows, cols = np.nonzero(mask)
    vectors = pixel_center_vectors(rows, cols, size)
    area = None
    if solid_angle:
        _, lat = pixel_center_lonlat(size)
        area = np.cos(lat)[rows]
    candidates = None
    if rotated:
        edge_rows, edge_cols = np.nonzero(morphology.boundary(mask))
        candidates = pixel_center_vectors(edge_rows, edge_cols, size)
    return fit_bfov(vectors, rotated=rotated, candidates=candidates, min_extent=math.pi / size.height, weights=area)


def mask_to_representations(m: np.ndarray, size: ErpSize) -> Representations:
    """Convert a target mask into all four ground-truth representations."""
    mask = as_mask(m)
    return Representations(
        bbox=mask_to_bbox(mask),
        rbbox=mask_to_rbbox(mask),
        bfov=mask_to_bfov(mask, size, rotated=False),
        rbfov=mask_to_bfov(mask, size, rotated=True),
    )


def representations_to_record(frame: int, reps: Representations, mask: Optional[np.ndarray] = None) -> AnnotationRecord:
    return AnnotationRecord(frame=frame, bbox=reps.bbox, rbbox=reps.rbbox, bfov=reps.bfov, rbfov=reps.rbfov, mask=mask)


__all__: List[str] = [
    "AnnotationRecord",
    "BBox",
    "BFoV",
    "BoundaryPolygon",
    "RBBox",
    "RepresentationKind",
    "Representations",
    "SamplingGrid",
    "bfov_boundary",
    "bfov_region_mask",
    "ebfov_grid",
    "fit_bfov",
    "mask_to_bbox",
    "mask_to_bfov",
    "mask_to_rbbox",
    "mask_to_representations",
    "points_to_bbox",
    "points_to_rbbox",
    "spherical_surface",
    "tangent_surface",
    "uses_tangent_plane",
]
