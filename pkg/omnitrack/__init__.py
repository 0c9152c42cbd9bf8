"""omnitrack - omnidirectional tracking geometry and evaluation on equirectangular images."""

from importlib.metadata import PackageNotFoundError, version

from omnitrack.config import EvalSettings, SearchPolicy
from omnitrack.errors import OmniTrackError
from omnitrack.framework import FrameResult, LocalPrediction, LocalTracker, NCCTracker, OracleTracker, next_search_region, track_sequence
from omnitrack.metrics import EvalReport, ope_evaluate, sphere_iou
from omnitrack.regions import BBox, BFoV, RBBox, RepresentationKind, bfov_region_mask, ebfov_grid, mask_to_representations
from omnitrack.remap import extract_region, lift_box, lift_mask
from omnitrack.sphere_geom import ErpSize, LonLat

try:
    __version__ = version("omnitrack")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "BBox",
    "BFoV",
    "ErpSize",
    "EvalReport",
    "EvalSettings",
    "FrameResult",
    "LocalPrediction",
    "LocalTracker",
    "LonLat",
    "NCCTracker",
    "OmniTrackError",
    "OracleTracker",
    "RBBox",
    "RepresentationKind",
    "SearchPolicy",
    "bfov_region_mask",
    "ebfov_grid",
    "extract_region",
    "lift_box",
    "lift_mask",
    "mask_to_representations",
    "next_search_region",
    "ope_evaluate",
    "sphere_iou",
    "track_sequence",
]
