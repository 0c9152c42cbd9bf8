"""Tracking and segmentation metrics for ERP sequences.

Tracking metrics follow the one-pass evaluation (OPE) protocol: the
tracker is initialised on the first frame, which is not scored, and every
following frame contributes one sample. Rates are averaged per sequence;
aggregates are the unweighted mean over sequences.

Pixel-count metrics have solid-angle weighted counterparts (``*_sphere``)
that remove the latitude bias of the equirectangular projection.
"""

import logging
import math

from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union, cast

import cv2
import numpy as np

from omnitrack import morphology
from omnitrack.config import EvalSettings, default_contour_tol
from omnitrack.dataset_io import load_sequence, read_results, record_mask
from omnitrack.errors import DimensionMismatchError, DomainError, EmptyMaskError, LengthMismatchError
from omnitrack.regions import (
    AnnotationRecord,
    BBox,
    BFoV,
    Box,
    RBBox,
    as_mask,
    as_rbbox,
    bfov_region_mask,
    mask_to_bbox,
    mask_to_bfov,
)
from omnitrack.sphere_geom import ErpSize, LonLat, geodesic_angle, wrap_delta


logger = logging.getLogger(__name__)

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
PRECISION_THRESHOLDS = np.arange(0.0, 51.0)
NORM_PRECISION_THRESHOLDS = np.linspace(0.0, 0.5, 51)
ANGLE_THRESHOLDS = np.linspace(0.0, 20.0, 201)

PRECISION_RANK_PX = 20.0
ANGLE_RANK_DEG = 3.0

AngleMode = Literal["geodesic", "literal"]


@dataclass(frozen=True)
class SuccessCurve:
    """Rates sampled on a threshold grid; ``auc`` is their mean."""

    thresholds: np.ndarray
    rates: np.ndarray

    @property
    def auc(self) -> float:
        return float(np.mean(self.rates))

    def rate_at(self, threshold: float) -> float:
        index = int(np.argmin(np.abs(self.thresholds - threshold)))
        return float(self.rates[index])

    def samples(self) -> List[List[float]]:
        return [[float(t), float(r)] for t, r in zip(self.thresholds, self.rates)]


def success_curve(overlaps: np.ndarray, thresholds: np.ndarray = SUCCESS_THRESHOLDS) -> SuccessCurve:
    """Fraction of frames whose overlap is positive and at least each threshold."""
    overlaps = np.asarray(overlaps, np.float64)
    hits = (overlaps[None, :] > 0) & (overlaps[None, :] >= thresholds[:, None])
    return SuccessCurve(thresholds, hits.mean(axis=1) if overlaps.size else np.zeros(thresholds.size))


def precision_curve(distances: np.ndarray, thresholds: np.ndarray) -> SuccessCurve:
    """Fraction of frames whose distance is within each threshold."""
    distances = np.asarray(distances, np.float64)
    hits = distances[None, :] <= thresholds[:, None]
    return SuccessCurve(thresholds, hits.mean(axis=1) if distances.size else np.zeros(thresholds.size))


# ---------------------------------------------------------------------------
# Box metrics
# ---------------------------------------------------------------------------

def _axis_aligned_iou(a: RBBox, b: RBBox) -> float:
    inter_w = min(a.cx + 0.5 * a.w, b.cx + 0.5 * b.w) - max(a.cx - 0.5 * a.w, b.cx - 0.5 * b.w)
    inter_h = min(a.cy + 0.5 * a.h, b.cy + 0.5 * b.h) - max(a.cy - 0.5 * a.h, b.cy - 0.5 * b.h)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def iou_planar(a: Box, b: Box) -> float:
    """Intersection over union of two (rotated) boxes on the image plane.

    Rotated boxes are intersected by convex polygon clipping. A box with
    zero area scores 0.
    """
    a, b = as_rbbox(a), as_rbbox(b)
    if a.area <= 0 or b.area <= 0:
        return 0.0
    if a == b:
        return 1.0
    if a.gamma == 0.0 and b.gamma == 0.0:
        return _axis_aligned_iou(a, b)
    # clip around a local origin to keep float32 precision on wide images
    origin = np.array([a.cx, a.cy])
    poly_a = (a.corners() - origin).astype(np.float32)
    poly_b = (b.corners() - origin).astype(np.float32)
    inter, _ = cv2.intersectConvexConvex(poly_a, poly_b)
    inter = max(float(inter), 0.0)
    union = a.area + b.area - inter
    return float(min(1.0, inter / union)) if union > 0 else 0.0


def _shifted(box: Box, dx: float) -> Box:
    return replace(box, cx=box.cx + dx)


def dual_success(gt: Box, tr: Box, size: ErpSize) -> float:
    """Best IoU of ``tr`` against ``gt`` and its copies shifted by one image width either way."""
    width = size.width
    return max(iou_planar(_shifted(gt, shift), tr) for shift in (-width, 0.0, width))


def _center_distance(gt: Tuple[float, float], tr: Tuple[float, float], gt_box: Optional[Box], normalized: bool) -> float:
    dx, dy = tr[0] - gt[0], tr[1] - gt[1]
    if normalized:
        if gt_box is None:
            raise DomainError("Normalized precision needs the ground-truth box")
        dx, dy = dx / gt_box.w, dy / gt_box.h
    return math.hypot(dx, dy)


def dual_precision(
    gt_center: Tuple[float, float],
    tr_center: Tuple[float, float],
    size: ErpSize,
    gt_box: Optional[Box] = None,
    normalized: bool = False,
) -> float:
    """Smallest centre distance to the ground truth or its width-shifted copies.

    With ``normalized`` the offset is divided by the ground-truth width and
    height before taking the norm.
    """
    if normalized and gt_box is None:
        raise DomainError("Normalized precision needs the ground-truth box")
    width = size.width
    return min(
        _center_distance((gt_center[0] + shift, gt_center[1]), tr_center, gt_box, normalized)
        for shift in (-width, 0.0, width)
    )


def center_precision(gt_center, tr_center, gt_box: Optional[Box] = None, normalized: bool = False) -> float:
    """Plain centre distance, without border shifting."""
    return _center_distance(gt_center, tr_center, gt_box, normalized)


def angle_precision(gt: LonLat, tr: LonLat, mode: AngleMode = "geodesic") -> float:
    """Angular distance in degrees between two target centres.

    ``geodesic`` is the central angle between the two directions. ``literal``
    is the Euclidean norm of the wrapped longitude and latitude differences;
    it overstates distances near the poles, e.g. (0, 89) and (180, 89)
    are 2 degrees apart but score 180.
    """
    if mode == "geodesic":
        return math.degrees(geodesic_angle(gt, tr))
    if mode == "literal":
        return math.degrees(math.hypot(abs(wrap_delta(tr.lon - gt.lon)), tr.lat - gt.lat))
    raise DomainError(f"Unknown angle mode {mode!r}")


# ---------------------------------------------------------------------------
# Spherical weights and mask metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalWeights:
    """Solid angle of every pixel, stored per row (constant along a row)."""

    size: ErpSize
    rows: np.ndarray = field(repr=False)

    def total(self) -> float:
        return float(self.rows.sum() * self.size.width)

    def grid(self) -> np.ndarray:
        return np.broadcast_to(self.rows[:, None], self.size.shape)

    def weighted_sum(self, mask: np.ndarray) -> float:
        mask = as_mask(mask)
        if mask.shape != self.size.shape:
            raise DimensionMismatchError(f"Mask shape {mask.shape} does not match weights for {self.size}")
        return float(mask.sum(axis=1, dtype=np.float64) @ self.rows)


@lru_cache(maxsize=8)
def spherical_weights(size: ErpSize) -> SphericalWeights:
    d_colat = math.pi / size.height
    d_lon = 2.0 * math.pi / size.width
    colat = (np.arange(size.height) + 0.5) * d_colat
    rows = d_lon * (np.cos(colat - 0.5 * d_colat) - np.cos(colat + 0.5 * d_colat))
    rows.setflags(write=False)
    return SphericalWeights(size, rows)


def _pair(gt: np.ndarray, tr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gt, tr = as_mask(gt), as_mask(tr)
    if gt.shape != tr.shape:
        raise DimensionMismatchError(f"Mask shapes differ: {gt.shape} vs {tr.shape}")
    return gt, tr


def _count(mask: np.ndarray, weights: Optional[SphericalWeights]) -> float:
    return float(np.count_nonzero(mask)) if weights is None else weights.weighted_sum(mask)


def region_similarity(gt: np.ndarray, tr: np.ndarray, weights: Optional[SphericalWeights] = None) -> float:
    """Mask IoU (J), solid-angle weighted when ``weights`` are given. Two empty masks score 1."""
    gt, tr = _pair(gt, tr)
    gt_any, tr_any = bool(gt.any()), bool(tr.any())
    if not gt_any and not tr_any:
        return 1.0
    if not gt_any or not tr_any:
        return 0.0
    union = _count(gt | tr, weights)
    return _count(gt & tr, weights) / union if union > 0 else 0.0


def contour_accuracy(
    gt: np.ndarray,
    tr: np.ndarray,
    weights: Optional[SphericalWeights] = None,
    tol: Optional[int] = None,
) -> float:
    """Boundary F-measure (F) with a dilation tolerance of ``tol`` pixels.

    Contours are wrap-aware 8-connected boundaries. A contour pixel counts
    as matched when it lies within ``tol`` of the other contour.
    """
    gt, tr = _pair(gt, tr)
    gt_contour, tr_contour = morphology.boundary(gt), morphology.boundary(tr)
    gt_any, tr_any = bool(gt_contour.any()), bool(tr_contour.any())
    if not gt_any and not tr_any:
        return 1.0
    if not gt_any or not tr_any:
        return 0.0
    if tol is None:
        tol = default_contour_tol(gt.shape[1], gt.shape[0])
    precision = _count(tr_contour & morphology.dilate(gt_contour, tol), weights) / _count(tr_contour, weights)
    recall = _count(gt_contour & morphology.dilate(tr_contour, tol), weights) / _count(gt_contour, weights)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def sphere_iou(a: BFoV, b: BFoV, raster: Optional[ErpSize] = None, extended: bool = True) -> float:
    """Spherical IoU of two BFoV regions by solid-angle weighted rasterisation."""
    raster = raster or EvalSettings().raster
    if a == b:
        return 1.0
    mask_a = bfov_region_mask(a, raster, extended=extended)
    mask_b = bfov_region_mask(b, raster, extended=extended)
    weights = spherical_weights(raster)
    union = weights.weighted_sum(mask_a | mask_b)
    if union <= 0:
        return 0.0
    return weights.weighted_sum(mask_a & mask_b) / union


# ---------------------------------------------------------------------------
# Attributes
# ---------------------------------------------------------------------------

LR_AREA = 1000
HR_AREA = 500 ** 2
RATIO_RANGE = (0.5, 2.0)
BORDER_BAND = 2
LARGE_FOV = math.radians(90.0)
LATITUDE_RANGE = math.radians(50.0)
HIGH_LATITUDE = math.radians(60.0)


@dataclass(frozen=True)
class AttributeFlags:
    ARC: bool = False
    SV: bool = False
    FM: bool = False
    LR: bool = False
    HR: bool = False
    CB: bool = False
    FMS: bool = False
    LFoV: bool = False
    LV: bool = False
    HL: bool = False

    def as_dict(self) -> Dict[str, bool]:
        return {f.name: bool(getattr(self, f.name)) for f in fields(self)}

    def active(self) -> List[str]:
        return [name for name, value in self.as_dict().items() if value]


def _outside(ratio: float) -> bool:
    return ratio < RATIO_RANGE[0] or ratio > RATIO_RANGE[1]


def _frame_shapes(record: AnnotationRecord, size: ErpSize):
    mask = record_mask(record)
    bbox = record.bbox
    bfov = record.bfov
    if mask is not None and mask.any():
        if bbox is None:
            bbox = mask_to_bbox(mask)
        if bfov is None:
            bfov = mask_to_bfov(mask, size)
    elif mask is not None:
        mask = None
    return bbox, bfov, mask


def compute_attributes(gt: Sequence[AnnotationRecord], size: ErpSize) -> AttributeFlags:
    """Attributes computable from annotations; a flag is set when any frame meets its condition."""
    if not gt:
        raise DomainError("Cannot compute attributes of an empty annotation stream")
    flags = {f.name: False for f in fields(AttributeFlags)}
    first_box: Optional[BBox] = None
    prev_box: Optional[BBox] = None
    prev_fov: Optional[BFoV] = None
    latitudes: List[float] = []
    for record in gt:
        bbox, bfov, mask = _frame_shapes(record, size)
        if bbox is not None:
            if first_box is None:
                first_box = bbox
            flags["ARC"] |= _outside((bbox.w / bbox.h) / (first_box.w / first_box.h))
            flags["SV"] |= _outside(bbox.area / first_box.area)
            if prev_box is not None:
                dx = abs(bbox.cx - prev_box.cx) % size.width
                dx = min(dx, size.width - dx)
                flags["FM"] |= math.hypot(dx, bbox.cy - prev_box.cy) > math.sqrt(prev_box.area)
            prev_box = bbox
        if mask is not None:
            area = int(np.count_nonzero(mask))
            flags["CB"] |= bool(mask[:, :BORDER_BAND].any() and mask[:, -BORDER_BAND:].any())
        elif bbox is not None:
            area = bbox.area
            flags["CB"] |= bbox.cx - 0.5 * bbox.w < 0 or bbox.cx + 0.5 * bbox.w > size.width
        else:
            area = None
        if area is not None:
            flags["LR"] |= area < LR_AREA
            flags["HR"] |= area > HR_AREA
        if bfov is not None:
            flags["LFoV"] |= bfov.theta > LARGE_FOV or bfov.phi > LARGE_FOV
            flags["HL"] |= abs(bfov.clat) > HIGH_LATITUDE
            latitudes.append(bfov.clat)
            if prev_fov is not None:
                motion = geodesic_angle(prev_fov.center, bfov.center)
                flags["FMS"] |= motion > max(prev_fov.theta, prev_fov.phi)
            prev_fov = bfov
    if latitudes:
        flags["LV"] = max(latitudes) - min(latitudes) > LATITUDE_RANGE
    return AttributeFlags(**{name: bool(value) for name, value in flags.items()})


# ---------------------------------------------------------------------------
# One-pass evaluation
# ---------------------------------------------------------------------------

@dataclass
class SequenceReport:
    name: str
    frames: int
    metrics: Dict[str, float]
    curves: Dict[str, SuccessCurve]
    attributes: Dict[str, bool] = field(default_factory=dict)


@dataclass
class EvalReport:
    tracker: str
    raster: ErpSize
    settings: EvalSettings
    per_sequence: Dict[str, SequenceReport] = field(default_factory=dict)
    aggregate: Dict[str, float] = field(default_factory=dict)
    curves: Dict[str, SuccessCurve] = field(default_factory=dict)
    attribute_breakdown: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "schema": 1,
            "tracker": self.tracker,
            "raster": str(self.raster),
            "settings": self.settings.model_dump(mode="json", exclude={"raster"}),
            "per_sequence": {
                name: {"frames": seq.frames, "metrics": dict(seq.metrics), "attributes": dict(seq.attributes)}
                for name, seq in self.per_sequence.items()
            },
            "aggregate": dict(self.aggregate),
            "attributes": {name: dict(values) for name, values in self.attribute_breakdown.items()},
            "curves": {name: curve.samples() for name, curve in self.curves.items()},
        }


def _as_record(item, frame: int) -> Optional[AnnotationRecord]:
    if item is None or isinstance(item, AnnotationRecord):
        return item
    to_record = getattr(item, "to_record", None)
    if to_record is None:
        raise DomainError(f"Cannot evaluate result of type {type(item).__name__}")
    return to_record(frame)


def _box_scores(gt_box: Box, tr_box: Optional[Box], size: ErpSize) -> Tuple[float, ...]:
    if tr_box is None:
        return 0.0, 0.0, math.inf, math.inf, math.inf, math.inf
    return (
        dual_success(gt_box, tr_box, size),
        iou_planar(gt_box, tr_box),
        dual_precision(gt_box.center, tr_box.center, size),
        center_precision(gt_box.center, tr_box.center),
        dual_precision(gt_box.center, tr_box.center, size, gt_box=gt_box, normalized=True),
        center_precision(gt_box.center, tr_box.center, gt_box=gt_box, normalized=True),
    )


def ope_evaluate(
    results: Sequence,
    gt: Sequence[AnnotationRecord],
    size: ErpSize,
    *,
    name: str = "sequence",
    tracker: str = "tracker",
    settings: Optional[EvalSettings] = None,
    attributes: Optional[AttributeFlags] = None,
) -> EvalReport:
    """One-pass evaluation of one sequence.

    Args:
        results: Per-frame predictions (``AnnotationRecord``, ``FrameResult``
            or ``None`` for a missing prediction), aligned with ``gt``.
        gt: Ground-truth records; frame 0 is the initialisation frame.
        size: ERP size of the sequence.
        name: Sequence name used in the report.
        tracker: Tracker name used in the report.
        settings: Evaluation options.
        attributes: Precomputed attribute flags; computed from ``gt`` otherwise.

    Returns:
        A report holding this one sequence.

    Raises:
        LengthMismatchError: If ``results`` and ``gt`` differ in length.
    """
    settings = settings or EvalSettings()
    if len(results) != len(gt):
        raise LengthMismatchError(f"{len(results)} results for {len(gt)} ground-truth frames in {name!r}")
    if len(gt) < 2:
        raise DomainError(f"Sequence {name!r} needs at least two frames for one-pass evaluation")

    box_rows: List[Tuple[float, ...]] = []
    angles: List[float] = []
    sphere_ious: List[float] = []
    mask_rows: List[Tuple[float, float, float, float]] = []
    weights = spherical_weights(size) if settings.masks else None
    tol = settings.resolved_contour_tol(size)
    missing = 0

    for frame in range(1, len(gt)):
        truth = gt[frame]
        predicted = _as_record(results[frame], frame)
        if predicted is None:
            missing += 1

        gt_box = cast(Optional[Box], truth.get(settings.box_kind))
        if gt_box is not None:
            tr_box = cast(Optional[Box], predicted.get(settings.box_kind) if predicted else None)
            box_rows.append(_box_scores(gt_box, tr_box, size))

        gt_fov = cast(Optional[BFoV], truth.get(settings.fov_kind))
        if gt_fov is not None:
            tr_fov = cast(Optional[BFoV], predicted.get(settings.fov_kind) if predicted else None)
            if tr_fov is None:
                angles.append(math.inf)
                sphere_ious.append(0.0)
            else:
                angles.append(angle_precision(gt_fov.center, tr_fov.center, settings.angle_mode))
                sphere_ious.append(sphere_iou(gt_fov, tr_fov, settings.raster))

        if settings.masks:
            gt_mask = record_mask(truth)
            if gt_mask is None:
                continue
            tr_mask = record_mask(predicted) if predicted else None
            if tr_mask is None:
                tr_mask = np.zeros_like(gt_mask, dtype=bool)
            mask_rows.append((
                region_similarity(gt_mask, tr_mask),
                contour_accuracy(gt_mask, tr_mask, tol=tol),
                region_similarity(gt_mask, tr_mask, weights),
                contour_accuracy(gt_mask, tr_mask, weights, tol=tol),
            ))

    if missing:
        logger.warning(f"{name}: {missing} frame(s) without a prediction scored as failures")

    metrics: Dict[str, float] = {}
    curves: Dict[str, SuccessCurve] = {}
    if box_rows:
        columns = np.array(box_rows, dtype=np.float64)
        curves["S_dual"] = success_curve(columns[:, 0])
        curves["S"] = success_curve(columns[:, 1])
        curves["P_dual"] = precision_curve(columns[:, 2], PRECISION_THRESHOLDS)
        curves["P"] = precision_curve(columns[:, 3], PRECISION_THRESHOLDS)
        curves["P_norm_dual"] = precision_curve(columns[:, 4], NORM_PRECISION_THRESHOLDS)
        curves["P_norm"] = precision_curve(columns[:, 5], NORM_PRECISION_THRESHOLDS)
        metrics.update({
            "S_dual_auc": curves["S_dual"].auc,
            "S_auc": curves["S"].auc,
            "P_dual_20": curves["P_dual"].rate_at(PRECISION_RANK_PX),
            "P_20": curves["P"].rate_at(PRECISION_RANK_PX),
            "P_norm_dual_auc": curves["P_norm_dual"].auc,
            "P_norm_auc": curves["P_norm"].auc,
        })
    if angles:
        curves["P_angle"] = precision_curve(np.array(angles), ANGLE_THRESHOLDS)
        curves["S_sphere"] = success_curve(np.array(sphere_ious))
        metrics["P_angle_3"] = curves["P_angle"].rate_at(ANGLE_RANK_DEG)
        metrics["S_sphere_auc"] = curves["S_sphere"].auc
    if mask_rows:
        values = np.array(mask_rows, dtype=np.float64).mean(axis=0)
        metrics.update({"J": float(values[0]), "F": float(values[1]), "J_sphere": float(values[2]), "F_sphere": float(values[3])})

    if attributes is None:
        try:
            attributes = compute_attributes(gt, size)
        except EmptyMaskError:
            attributes = AttributeFlags()
    sequence = SequenceReport(name=name, frames=len(gt), metrics=metrics, curves=curves, attributes=attributes.as_dict())
    logger.info(f"{name}: " + ", ".join(f"{key}={value:.3f}" for key, value in metrics.items()))
    return combine_reports([sequence], tracker=tracker, raster=settings.raster, settings=settings)


def _mean_metrics(sequences: Sequence[SequenceReport]) -> Dict[str, float]:
    keys = sorted({key for seq in sequences for key in seq.metrics})
    return {key: float(np.mean([seq.metrics[key] for seq in sequences if key in seq.metrics])) for key in keys}


def combine_reports(
    sequences: Sequence[Union[SequenceReport, EvalReport]],
    *,
    tracker: str = "tracker",
    raster: Optional[ErpSize] = None,
    settings: Optional[EvalSettings] = None,
) -> EvalReport:
    """Aggregate per-sequence reports: unweighted mean of metrics and curves, plus the attribute breakdown."""
    flat: List[SequenceReport] = []
    for item in sequences:
        if isinstance(item, EvalReport):
            flat.extend(item.per_sequence.values())
            settings = settings or item.settings
        else:
            flat.append(item)
    settings = settings or EvalSettings()
    report = EvalReport(tracker=tracker, raster=raster or settings.raster, settings=settings)
    report.per_sequence = {seq.name: seq for seq in flat}
    if not flat:
        return report
    report.aggregate = _mean_metrics(flat)
    for key in sorted({key for seq in flat for key in seq.curves}):
        members = [seq.curves[key] for seq in flat if key in seq.curves]
        report.curves[key] = SuccessCurve(members[0].thresholds, np.mean([curve.rates for curve in members], axis=0))
    for attribute in (f.name for f in fields(AttributeFlags)):
        members = [seq for seq in flat if seq.attributes.get(attribute)]
        if members:
            report.attribute_breakdown[attribute] = {"sequences": float(len(members)), **_mean_metrics(members)}
    return report


def evaluate_sequence(
    seq_dir,
    results_dir,
    settings: Optional[EvalSettings] = None,
    tracker: str = "tracker",
) -> EvalReport:
    """Load a sequence and a result directory and run :func:`ope_evaluate` on them."""
    manifest = load_sequence(seq_dir)
    gt = manifest.load_annotations()
    results = read_results(results_dir, frames=len(gt))
    computed = manifest.load_attributes().get("computed")
    attributes = AttributeFlags(**{k: bool(v) for k, v in computed.items() if k in AttributeFlags.__dataclass_fields__}) if computed else None
    return ope_evaluate(results, gt, manifest.size, name=manifest.name, tracker=tracker, settings=settings, attributes=attributes)
