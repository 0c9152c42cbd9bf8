"""Spherical camera model for equirectangular (ERP) images.

Conventions:
    u = (lon / 2pi + 0.5) * W,   v = (-lat / pi + 0.5) * H
    x = cos(lat) sin(lon),  y = -sin(lat),  z = cos(lat) cos(lon)

Longitudes live in [-pi, pi), latitudes in [-pi/2, pi/2]. Angles are radians
everywhere in memory. Scalar helpers operate on the small value types below;
the ``*_array`` helpers are their vectorised counterparts used by the raster
code paths.
"""

import logging
import math
import re

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from omnitrack.errors import DomainError


logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# Below this horizontal norm a direction is treated as a pole.
_POLE_EPS = 1e-12

# Type alias for a 3x3 orthonormal rotation matrix with det = +1.
Rotation3 = np.ndarray


def normalize_lon(lon):
    """Wrap longitude(s) into [-pi, pi)."""
    wrapped = np.mod(np.asarray(lon, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def wrap_delta(delta):
    """Wrap a longitude difference into [-pi, pi)."""
    return normalize_lon(delta)


@dataclass(frozen=True)
class LonLat:
    lon: float
    lat: float

    def __post_init__(self):
        lon = float(self.lon)
        lat = float(self.lat)
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise DomainError(f"LonLat components must be finite, got ({lon!r}, {lat!r})")
        if abs(lat) > HALF_PI + 1e-12:
            raise DomainError(f"Latitude outside [-pi/2, pi/2]: {lat!r}")
        object.__setattr__(self, "lon", normalize_lon(lon))
        object.__setattr__(self, "lat", max(-HALF_PI, min(HALF_PI, lat)))

    @classmethod
    def from_degrees(cls, lon: float, lat: float) -> "LonLat":
        return cls(math.radians(lon), math.radians(lat))

    def degrees(self) -> Tuple[float, float]:
        return math.degrees(self.lon), math.degrees(self.lat)


@dataclass(frozen=True)
class PixelCoord:
    u: float
    v: float


@dataclass(frozen=True)
class UnitVec3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


_SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*[xX*,]\s*(\d+)\s*$")


@dataclass(frozen=True)
class ErpSize:
    """Width and height of an equirectangular image (W = 2H)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.width != 2 * self.height:
            raise DomainError(
                f"ERP size must satisfy W = 2H and W >= 2, got {self.width}x{self.height}"
            )

    @classmethod
    def parse(cls, text: str) -> "ErpSize":
        """Parse ``"WxH"`` (e.g. ``"1920x960"``)."""
        match = _SIZE_PATTERN.match(text or "")
        if not match:
            raise DomainError(f"Cannot parse ERP size from {text!r}; expected 'WxH'")
        return cls(int(match.group(1)), int(match.group(2)))

    @classmethod
    def of(cls, array: np.ndarray) -> "ErpSize":
        """Size of an image or mask array laid out as (H, W[, C])."""
        return cls(int(array.shape[1]), int(array.shape[0]))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


# ---------------------------------------------------------------------------
# Vectorised conversions
# ---------------------------------------------------------------------------

def pixels_to_lonlat_array(u, v, size: ErpSize) -> Tuple[np.ndarray, np.ndarray]:
    u = np.mod(np.asarray(u, dtype=np.float64), size.width)
    v = np.asarray(v, dtype=np.float64)
    lon = normalize_lon((u / size.width - 0.5) * TWO_PI)
    lat = (0.5 - v / size.height) * math.pi
    return np.asarray(lon), lat


def lonlat_to_pixels_array(lon, lat, size: ErpSize) -> Tuple[np.ndarray, np.ndarray]:
    lon = normalize_lon(np.asarray(lon, dtype=np.float64))
    lat = np.asarray(lat, dtype=np.float64)
    u = (np.asarray(lon) / TWO_PI + 0.5) * size.width
    # lon just below pi can round up to exactly W
    u = np.where(u >= size.width, u - size.width, u)
    v = (-lat / math.pi + 0.5) * size.height
    return u, v


def lonlat_to_vec_array(lon, lat) -> np.ndarray:
    """Stack unit vectors for broadcastable lon/lat arrays; last axis is xyz."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    cos_lat = np.cos(lat)
    return np.stack(
        np.broadcast_arrays(cos_lat * np.sin(lon), -np.sin(lat), cos_lat * np.cos(lon)),
        axis=-1,
    )


def vec_to_lonlat_array(xyz: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`lonlat_to_vec_array`; input need not be normalised."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    horizontal = np.hypot(x, z)
    lat = np.arctan2(-y, horizontal)
    lon = np.where(horizontal < _POLE_EPS * np.maximum(np.abs(y), 1.0), 0.0, np.arctan2(x, z))
    return np.asarray(normalize_lon(lon)), lat


@lru_cache(maxsize=8)
def pixel_center_lonlat(size: ErpSize) -> Tuple[np.ndarray, np.ndarray]:
    """Longitude of every column centre (W,) and latitude of every row centre (H,)."""
    lon, _ = pixels_to_lonlat_array(np.arange(size.width) + 0.5, 0.0, size)
    _, lat = pixels_to_lonlat_array(0.0, np.arange(size.height) + 0.5, size)
    lon = np.broadcast_to(lon, (size.width,)).copy()
    lat = np.broadcast_to(lat, (size.height,)).copy()
    lon.setflags(write=False)
    lat.setflags(write=False)
    return lon, lat


def pixel_center_vectors(rows: np.ndarray, cols: np.ndarray, size: ErpSize) -> np.ndarray:
    """Unit vectors of the given pixel indices (pixel-centre convention)."""
    lon, lat = pixel_center_lonlat(size)
    return lonlat_to_vec_array(lon[cols], lat[rows])


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def pixel_to_lonlat(p: PixelCoord, size: ErpSize) -> LonLat:
    if not (math.isfinite(p.u) and math.isfinite(p.v)):
        raise DomainError(f"Pixel coordinates must be finite, got ({p.u!r}, {p.v!r})")
    if p.v < 0.0 or p.v > size.height:
        raise DomainError(f"v={p.v!r} outside [0, {size.height}]")
    u = math.fmod(p.u, size.width)
    if u < 0.0:
        u += size.width
    lon = (u / size.width - 0.5) * TWO_PI
    lat = (0.5 - p.v / size.height) * math.pi
    return LonLat(lon, lat)


def lonlat_to_pixel(s: LonLat, size: ErpSize) -> PixelCoord:
    u = (s.lon / TWO_PI + 0.5) * size.width
    if u >= size.width:
        u -= size.width
    v = (-s.lat / math.pi + 0.5) * size.height
    return PixelCoord(u, v)


def lonlat_to_vec(s: LonLat) -> UnitVec3:
    cos_lat = math.cos(s.lat)
    return UnitVec3(cos_lat * math.sin(s.lon), -math.sin(s.lat), cos_lat * math.cos(s.lon))


def vec_to_lonlat(v: UnitVec3) -> LonLat:
    norm = math.sqrt(v.x * v.x + v.y * v.y + v.z * v.z)
    if not math.isfinite(norm) or norm == 0.0:
        raise DomainError(f"Cannot convert zero or non-finite vector {v!r} to lon/lat")
    x, y, z = v.x / norm, v.y / norm, v.z / norm
    horizontal = math.hypot(x, z)
    lat = math.atan2(-y, horizontal)
    # longitude is undefined at the poles; pin it for determinism
    lon = 0.0 if horizontal < _POLE_EPS else math.atan2(x, z)
    return LonLat(lon, lat)


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def bfov_rotation(clon: float, clat: float, gamma: float) -> Rotation3:
    """R_y(clon) . R_x(clat) . R_z(gamma); maps the optical axis onto the BFoV centre."""
    return rot_y(clon) @ rot_x(clat) @ rot_z(gamma)


def geodesic_angle(a: LonLat, b: LonLat) -> float:
    """Central angle between two directions, in [0, pi]."""
    va = lonlat_to_vec(a).as_array()
    vb = lonlat_to_vec(b).as_array()
    # atan2 of (|a x b|, a . b) is the arccos of the clamped dot product,
    # without arccos' loss of precision near 0 and pi
    return float(math.atan2(np.linalg.norm(np.cross(va, vb)), float(np.clip(va @ vb, -1.0, 1.0))))
