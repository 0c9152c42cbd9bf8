"""Synthetic ERP sequences: a spherical cap moving over a textured background.

Cap masks, areas and extents are known in closed form, which makes these
sequences exact test oracles for the conversions, the tracking loop and
the metrics.
"""

import enum
import logging
import math

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from omnitrack.dataset_io import FRAMES_DIR, SequenceManifest, frame_name, load_sequence, write_attributes, write_frame, write_records
from omnitrack.errors import DomainError
from omnitrack.metrics import compute_attributes
from omnitrack.regions import mask_to_representations, representations_to_record
from omnitrack.sphere_geom import HALF_PI, ErpSize, LonLat, UnitVec3, lonlat_to_vec, pixel_center_lonlat, rot_x, vec_to_lonlat


logger = logging.getLogger(__name__)


class TrajectoryKind(str, enum.Enum):
    STATIC = "static"
    GREAT_CIRCLE = "great_circle"
    POLE_CROSS = "pole_cross"
    BORDER_CROSS = "border_cross"


@dataclass(frozen=True)
class CapSpec:
    """A spherical cap target; colours are BGR."""

    center: LonLat
    rho: float
    fg: Tuple[int, int, int] = (60, 60, 230)
    bg: int = 128
    noise: int = 24

    def __post_init__(self):
        if not 0.0 < self.rho < HALF_PI:
            raise DomainError(f"Cap radius must lie in (0, pi/2), got {self.rho!r}")
        if self.noise < 0:
            raise DomainError(f"Noise amplitude must be non-negative, got {self.noise!r}")

    @classmethod
    def from_degrees(cls, lon: float, lat: float, rho: float, **kwargs) -> "CapSpec":
        return cls(LonLat.from_degrees(lon, lat), math.radians(rho), **kwargs)


@dataclass(frozen=True)
class Trajectory:
    kind: TrajectoryKind
    centers: Tuple[LonLat, ...]

    def __post_init__(self):
        if not self.centers:
            raise DomainError("A trajectory needs at least one frame")

    @property
    def frames(self) -> int:
        return len(self.centers)


def _schedule(frames: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)


def make_trajectory(kind: TrajectoryKind, frames: int, start: Optional[LonLat] = None) -> Trajectory:
    """Per-frame cap centres.

    * ``static``: fixed at ``start`` (default lon 0, lat 0)
    * ``great_circle``: 90 degrees along a great circle inclined 30 degrees to the equator
    * ``pole_cross``: latitude 0 -> 85 -> 0 degrees on one meridian
    * ``border_cross``: longitude 150 -> 210 degrees on the equator, crossing the image seam
    """
    kind = TrajectoryKind(kind)
    if frames < 1:
        raise DomainError(f"A trajectory needs at least one frame, got {frames}")
    start = start or LonLat(0.0, 0.0)
    t = _schedule(frames)
    if kind is TrajectoryKind.STATIC:
        centers = [start] * frames
    elif kind is TrajectoryKind.GREAT_CIRCLE:
        tilt = rot_x(math.radians(30.0))
        centers = []
        for step in t:
            base = lonlat_to_vec(LonLat(start.lon + step * HALF_PI, 0.0)).as_array()
            x, y, z = tilt @ base
            centers.append(vec_to_lonlat(UnitVec3(float(x), float(y), float(z))))
    elif kind is TrajectoryKind.POLE_CROSS:
        peak = math.radians(85.0)
        centers = [LonLat(start.lon, peak * (1.0 - abs(2.0 * step - 1.0))) for step in t]
    else:
        first, last = math.radians(150.0), math.radians(210.0)
        centers = [LonLat(first + step * (last - first), start.lat) for step in t]
    return Trajectory(kind, tuple(centers))


def cap_mask(c: CapSpec, size: ErpSize) -> np.ndarray:
    """Pixels whose centre lies within ``rho`` of the cap centre."""
    lon, lat = pixel_center_lonlat(size)
    cos_dist = (np.cos(lat)[:, None] * math.cos(c.center.lat) * np.cos(lon[None, :] - c.center.lon)
                + np.sin(lat)[:, None] * math.sin(c.center.lat))
    return cos_dist >= math.cos(c.rho)


def background(size: ErpSize, c: CapSpec, seed: int = 0) -> np.ndarray:
    """Low-contrast per-pixel noise, fixed for a given seed."""
    rng = np.random.default_rng(seed)
    noise = rng.integers(-c.noise, c.noise + 1, size=size.shape, dtype=np.int16) if c.noise else np.zeros(size.shape, np.int16)
    gray = np.clip(c.bg + noise, 0, 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def render_frame(c: CapSpec, size: ErpSize, seed: int = 0, base: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Frame (H, W, 3) uint8 and target mask of one cap."""
    image = background(size, c, seed) if base is None else base.copy()
    mask = cap_mask(c, size)
    image[mask] = np.array(c.fg, dtype=np.uint8)
    return image, mask


def generate_sequence(t: Trajectory, c: CapSpec, size: ErpSize, out: Path, seed: int = 0) -> SequenceManifest:
    """Render ``t`` into ``out`` with frames, masks, the four ground-truth files and attributes."""
    out = Path(out)
    base = background(size, c, seed)
    records = []
    for index, center in enumerate(t.centers):
        frame, mask = render_frame(replace(c, center=center), size, base=base)
        write_frame(out / FRAMES_DIR / frame_name(index), frame)
        records.append(representations_to_record(index, mask_to_representations(mask, size), mask=mask))
    write_records(records, out)
    flags = compute_attributes(records, size)
    write_attributes(out, flags.as_dict())
    logger.info(f"Generated {t.kind.value} sequence of {t.frames} frames in {out}; attributes: {', '.join(flags.active()) or 'none'}")
    return load_sequence(out)
