"""MCP tool server over the omnitrack geometry and metrics.

All angles are degrees at the tool boundary. Library errors surface as
``ToolError`` with the error code prefixed.
"""

import functools
import logging
import math

from typing import Any, Callable, Dict, List, Literal, Optional

from fastmcp import FastMCP
from fastmcp.exceptions import ToolError
from mcp.types import ToolAnnotations

from omnitrack import framework, metrics, regions
from omnitrack.config import EvalSettings, SearchPolicy
from omnitrack.dataset_io import convert_sequence
from omnitrack.errors import OmniTrackError
from omnitrack.regions import BBox, BFoV, RBBox
from omnitrack.sphere_geom import ErpSize, LonLat, PixelCoord
from omnitrack.sphere_geom import geodesic_angle as _geodesic_angle
from omnitrack.sphere_geom import lonlat_to_pixel as _lonlat_to_pixel
from omnitrack.sphere_geom import pixel_to_lonlat as _pixel_to_lonlat


logger = logging.getLogger(__name__)

READ_ONLY = ToolAnnotations(readOnlyHint=True, idempotentHint=True, openWorldHint=False)
WRITES_FILES = ToolAnnotations(readOnlyHint=False, destructiveHint=False, idempotentHint=True, openWorldHint=False)


def _tool_errors(func: Callable) -> Callable:
    """Report library and validation errors as ``ToolError``."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except OmniTrackError as e:
            logger.error(f"{func.__name__} failed: {e}")
            raise ToolError(f"[{e.code}] {e}") from e
        except (ValueError, OSError) as e:
            logger.error(f"{func.__name__} failed: {e}")
            raise ToolError(str(e)) from e

    return wrapper


def _box(values: List[float]):
    if len(values) == 4:
        return BBox(*values)
    if len(values) == 5:
        return RBBox(values[0], values[1], values[2], values[3], math.radians(values[4]))
    raise ValueError(f"Boxes are [cx, cy, w, h] or [cx, cy, w, h, gamma_deg], got {len(values)} values")


def _bfov(values: List[float]) -> BFoV:
    if len(values) not in (4, 5):
        raise ValueError(f"BFoVs are [clon, clat, theta, phi(, gamma)] in degrees, got {len(values)} values")
    return BFoV.from_degrees(*values)


def _bfov_dict(b: BFoV) -> Dict[str, float]:
    clon, clat, theta, phi, gamma = b.degrees()
    return {"clon": clon, "clat": clat, "theta": theta, "phi": phi, "gamma": gamma}


def pixel_to_lonlat(u: float, v: float, width: int = 1920, height: int = 960) -> Dict[str, float]:
    """Spherical coordinates (degrees) of an ERP pixel position."""
    lon, lat = _pixel_to_lonlat(PixelCoord(u, v), ErpSize(width, height)).degrees()
    return {"lon": lon, "lat": lat}


def lonlat_to_pixel(lon: float, lat: float, width: int = 1920, height: int = 960) -> Dict[str, float]:
    """ERP pixel position of a longitude/latitude in degrees."""
    p = _lonlat_to_pixel(LonLat.from_degrees(lon, lat), ErpSize(width, height))
    return {"u": p.u, "v": p.v}


def geodesic_angle(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Central angle in degrees between two directions given in degrees."""
    return math.degrees(_geodesic_angle(LonLat.from_degrees(lon1, lat1), LonLat.from_degrees(lon2, lat2)))


def bfov_boundary(
    bfov: List[float],
    width: int = 1920,
    height: int = 960,
    samples_per_edge: int = 64,
    extended: bool = True,
) -> Dict[str, Any]:
    """Outline of a BFoV region on the ERP image, split where it wraps the image border.

    Args:
        bfov: [clon, clat, theta, phi, gamma] in degrees.
        width: ERP width in pixels.
        height: ERP height in pixels.
        samples_per_edge: Points per surface edge.
        extended: Use the spherical surface for extents of 90 degrees or more.
    """
    b = _bfov(bfov)
    polygon = regions.bfov_boundary(b, samples_per_edge, ErpSize(width, height), extended=extended)
    return {
        "tangent": regions.uses_tangent_plane(b.theta, b.phi, extended),
        "segments": [segment.tolist() for segment in polygon.segments],
    }


def next_search_region(bfov: List[float], expand_factor: float = 2.0, min_fov: float = 30.0) -> Dict[str, float]:
    """Search region of the next frame for a predicted BFoV (degrees)."""
    policy = SearchPolicy(expand_factor=expand_factor, min_fov_deg=min_fov)
    return _bfov_dict(framework.next_search_region(_bfov(bfov), policy))


def dual_success(gt: List[float], tr: List[float], width: int = 1920) -> float:
    """Border-aware IoU of two boxes ([cx, cy, w, h] or [cx, cy, w, h, gamma_deg])."""
    return metrics.dual_success(_box(gt), _box(tr), ErpSize(width, width // 2))


def dual_precision(
    gt_center: List[float],
    tr_center: List[float],
    width: int = 1920,
    gt_size: Optional[List[float]] = None,
    normalized: bool = False,
) -> float:
    """Border-aware centre distance in pixels, or normalised by the ground-truth size [w, h]."""
    gt_box = BBox(gt_center[0], gt_center[1], gt_size[0], gt_size[1]) if gt_size else None
    return metrics.dual_precision(
        (gt_center[0], gt_center[1]), (tr_center[0], tr_center[1]), ErpSize(width, width // 2),
        gt_box=gt_box, normalized=normalized,
    )


def angle_precision(gt: List[float], tr: List[float], mode: Literal["geodesic", "literal"] = "geodesic") -> float:
    """Angular distance in degrees between two centres [lon, lat] given in degrees."""
    return metrics.angle_precision(LonLat.from_degrees(gt[0], gt[1]), LonLat.from_degrees(tr[0], tr[1]), mode)


def sphere_iou(a: List[float], b: List[float], width: int = 1920, height: int = 960) -> float:
    """Spherical IoU of two BFoVs [clon, clat, theta, phi, gamma] (degrees) on a width x height raster."""
    return metrics.sphere_iou(_bfov(a), _bfov(b), ErpSize(width, height))


def convert_masks(sequence_dir: str) -> Dict[str, Any]:
    """Write bbox/rbbox/bfov/rbfov ground truth and computed attributes from a sequence's masks."""
    manifest = convert_sequence(sequence_dir)
    return {
        "sequence": manifest.name,
        "frames": len(manifest),
        "files": sorted(str(path) for path in manifest.gt_paths.values()),
    }


def evaluate(
    sequence_dir: str,
    results_dir: str,
    masks: bool = False,
    box_kind: Literal["bbox", "rbbox"] = "bbox",
    fov_kind: Literal["bfov", "rbfov"] = "bfov",
    tracker: str = "tracker",
) -> Dict[str, Any]:
    """One-pass evaluation of a result directory against a sequence's ground truth."""
    settings = EvalSettings(masks=masks, box_kind=box_kind, fov_kind=fov_kind)
    report = metrics.evaluate_sequence(sequence_dir, results_dir, settings=settings, tracker=tracker)
    payload = report.to_dict()
    payload.pop("curves")
    return payload


TOOLS = (
    (pixel_to_lonlat, READ_ONLY),
    (lonlat_to_pixel, READ_ONLY),
    (geodesic_angle, READ_ONLY),
    (bfov_boundary, READ_ONLY),
    (next_search_region, READ_ONLY),
    (dual_success, READ_ONLY),
    (dual_precision, READ_ONLY),
    (angle_precision, READ_ONLY),
    (sphere_iou, READ_ONLY),
    (convert_masks, WRITES_FILES),
    (evaluate, READ_ONLY),
)


def add_tools(server: FastMCP) -> FastMCP:
    for func, annotations in TOOLS:
        server.tool(name=func.__name__, annotations=annotations)(_tool_errors(func))
    return server


class OmniTrackMCP(FastMCP):  # type: ignore

    def __init__(self, name: str = "omnitrack", *args, **kwargs):
        """
        Initialize the omnitrack MCP server.

        Args:
            name: Server name announced to clients
        """
        super().__init__(name, *args, **kwargs)
        add_tools(self)
