"""The 360 tracking loop.

Each frame the search BFoV is remapped into a local image, a local
tracker predicts a box or mask there, and the prediction is lifted back
to all four global representations. The next search region is centred on
the new prediction.

Local trackers only ever see local images; anything with ``kind``,
``init`` and ``update`` (see :class:`LocalTracker`) plugs in.
"""

import logging
import math

from dataclasses import dataclass, replace
from typing import Iterable, List, Literal, Optional, Protocol, Sequence, Union, runtime_checkable

import cv2
import numpy as np

from omnitrack.config import SearchPolicy
from omnitrack.errors import DegenerateMaskError, DimensionMismatchError, DomainError, EmptyMaskError, TrackerError
from omnitrack.regions import (
    AnnotationRecord,
    BBox,
    BFoV,
    RBBox,
    Representations,
    as_mask,
    bfov_region_mask,
    mask_to_representations,
)
from omnitrack.remap import LocalImage, extract_mask, extract_region, lift_box_all, lift_mask, local_box_from_mask, validate_erp_image
from omnitrack.sphere_geom import ErpSize


logger = logging.getLogger(__name__)

TrackerKind = Literal["box", "mask"]

NCC_LOST_SCORE = 0.2


@dataclass(frozen=True)
class LocalPrediction:
    kind: TrackerKind
    box: Optional[Union[BBox, RBBox]] = None
    mask: Optional[np.ndarray] = None
    confidence: float = 1.0

    def __post_init__(self):
        if self.kind == "box" and (self.box is None or self.mask is not None):
            raise DomainError("A box prediction carries exactly a box")
        if self.kind == "mask" and (self.mask is None or self.box is not None):
            raise DomainError("A mask prediction carries exactly a mask")
        object.__setattr__(self, "confidence", float(min(1.0, max(0.0, self.confidence))))


@runtime_checkable
class LocalTracker(Protocol):
    """Contract of a local tracker.

    ``update`` is only called after ``init`` and returns ``None`` when the
    target is lost.
    """

    kind: TrackerKind

    def init(self, local: LocalImage, target: Union[BBox, RBBox, np.ndarray]) -> None:
        ...

    def update(self, local: LocalImage) -> Optional[LocalPrediction]:
        ...


@dataclass(frozen=True)
class FrameResult:
    bbox: BBox
    rbbox: RBBox
    bfov: BFoV
    rbfov: BFoV
    mask: Optional[np.ndarray] = None
    confidence: float = 1.0
    search: Optional[BFoV] = None

    @classmethod
    def from_representations(cls, reps: Representations, **kwargs) -> "FrameResult":
        return cls(bbox=reps.bbox, rbbox=reps.rbbox, bfov=reps.bfov, rbfov=reps.rbfov, **kwargs)

    def to_record(self, frame: int) -> AnnotationRecord:
        return AnnotationRecord(frame=frame, bbox=self.bbox, rbbox=self.rbbox, bfov=self.bfov, rbfov=self.rbfov, mask=self.mask)


def next_search_region(prev: BFoV, policy: Optional[SearchPolicy] = None) -> BFoV:
    """Search BFoV for the next frame: same centre, expanded and clamped extents, no roll."""
    policy = policy or SearchPolicy()
    min_fov = math.radians(policy.min_fov_deg)
    theta = min(max(policy.expand_factor * prev.theta, min_fov), math.radians(policy.max_theta_deg))
    phi = min(max(policy.expand_factor * prev.phi, min_fov), math.radians(policy.max_phi_deg))
    return BFoV(prev.clon, prev.clat, theta, phi, 0.0)


def _initial_state(init: Union[BFoV, np.ndarray], size: ErpSize, policy: SearchPolicy):
    if isinstance(init, BFoV):
        init_mask = bfov_region_mask(init, size, extended=policy.extended)
        if not init_mask.any():
            raise EmptyMaskError(f"Initial BFoV {init.degrees()} covers no pixel centre at {size}")
        reps = mask_to_representations(init_mask, size)
        if init.gamma:
            reps = replace(reps, rbfov=init)
        else:
            reps = replace(reps, bfov=init)
        return reps, init_mask
    if isinstance(init, (BBox, RBBox)):
        raise DomainError("Tracking can be initialised from a BFoV or a mask, not from an image-plane box")
    init_mask = as_mask(init)
    if init_mask.shape != size.shape:
        raise DimensionMismatchError(f"Initial mask shape {init_mask.shape} does not match frame size {size}")
    if not init_mask.any():
        raise EmptyMaskError("Initial mask is empty")
    return mask_to_representations(init_mask, size), init_mask


def _lift(prediction: LocalPrediction, local: LocalImage, size: ErpSize, policy: SearchPolicy):
    """Global representations of a local prediction, or None if nothing survives lifting."""
    if prediction.kind == "mask":
        assert prediction.mask is not None
        lifted = lift_mask(prediction.mask, local.grid, size, dilation_radius=policy.dilation_radius)
        if not lifted.any():
            return None
        try:
            return mask_to_representations(lifted, size), lifted
        except DegenerateMaskError:
            return None
    assert prediction.box is not None
    return lift_box_all(prediction.box, local.grid, size), None


def track_sequence(
    frames: Iterable[np.ndarray],
    init: Union[BFoV, np.ndarray],
    tracker: LocalTracker,
    policy: Optional[SearchPolicy] = None,
) -> List[FrameResult]:
    """Run ``tracker`` through the 360 framework over ``frames``.

    Args:
        frames: ERP frames (H, W[, C]) of one sequence, all the same size.
        init: Target on the first frame, as a BFoV or an ERP mask.
        tracker: Local tracker.
        policy: Search-region sizing and local image resolution.

    Returns:
        One result per frame; the first one echoes ``init``.

    Raises:
        EmptyMaskError: If the initial target covers no pixel.
        DimensionMismatchError: If a frame differs in size from the first.
    """
    policy = policy or SearchPolicy()
    iterator = iter(frames)
    try:
        first = next(iterator)
    except StopIteration:
        raise DomainError("Cannot track an empty frame sequence") from None
    size = validate_erp_image(first)

    reps, init_mask = _initial_state(init, size, policy)
    search = next_search_region(reps.bfov, policy)
    local = extract_region(first, search, policy.local_size, policy.local_size, extended=policy.extended)
    local_mask = extract_mask(init_mask, local.grid)
    if not local_mask.any():
        raise EmptyMaskError("Initial target does not appear in the first search region")
    tracker.init(local, local_mask if tracker.kind == "mask" else local_box_from_mask(local_mask))

    results = [FrameResult.from_representations(reps, mask=init_mask, confidence=1.0, search=search)]
    for index, frame in enumerate(iterator, start=1):
        if np.shape(frame)[:2] != size.shape:
            raise DimensionMismatchError(f"Frame {index} has shape {np.shape(frame)}, expected {size}")
        local = extract_region(frame, search, policy.local_size, policy.local_size, extended=policy.extended)
        prediction = tracker.update(local)
        lifted = None if prediction is None else _lift(prediction, local, size, policy)
        if lifted is None:
            logger.warning(f"Target lost at frame {index}; keeping the search region")
            results.append(replace(results[-1], confidence=0.0, search=search))
            continue
        reps, mask = lifted
        assert prediction is not None
        results.append(FrameResult.from_representations(reps, mask=mask, confidence=prediction.confidence, search=search))
        search = next_search_region(reps.bfov, policy)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                f"frame {index}: bfov={tuple(round(v, 2) for v in reps.bfov.degrees())} "
                f"confidence={prediction.confidence:.3f}"
            )
    logger.info(f"Tracked {len(results)} frames at {size}")
    return results


def _gray(pixels: np.ndarray) -> np.ndarray:
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        pixels = cv2.cvtColor(pixels, cv2.COLOR_BGR2GRAY)
    elif pixels.ndim == 3:
        pixels = pixels[..., 0]
    return pixels.astype(np.float32)


class NCCTracker:
    """Template matcher on normalised cross-correlation.

    The template is cut from the first local image and matched over every
    following local image. Scores below ``lost_score`` report the target
    as lost.
    """

    kind: TrackerKind = "box"

    def __init__(self, lost_score: float = NCC_LOST_SCORE):
        self.lost_score = lost_score
        self.template: Optional[np.ndarray] = None

    def init(self, local: LocalImage, target: Union[BBox, RBBox, np.ndarray]) -> None:
        if not isinstance(target, (BBox, RBBox)):
            raise TrackerError("NCCTracker is initialised with a box")
        image = _gray(local.pixels)
        half_w, half_h = 0.5 * target.w, 0.5 * target.h
        left = max(int(round(target.cx - half_w)), 0)
        top = max(int(round(target.cy - half_h)), 0)
        right = min(int(round(target.cx + half_w)), image.shape[1])
        bottom = min(int(round(target.cy + half_h)), image.shape[0])
        if right <= left or bottom <= top:
            raise TrackerError(f"Template box {target} lies outside the local image")
        self.template = image[top:bottom, left:right].copy()

    def update(self, local: LocalImage) -> Optional[LocalPrediction]:
        if self.template is None:
            raise TrackerError("NCCTracker.update called before init")
        image = _gray(local.pixels)
        th, tw = self.template.shape
        if th > image.shape[0] or tw > image.shape[1]:
            raise TrackerError(f"Template {tw}x{th} is larger than the local image {image.shape[1]}x{image.shape[0]}")
        if float(self.template.std()) == 0.0 or float(image.std()) == 0.0:
            return None
        matches = np.nan_to_num(cv2.matchTemplate(image, self.template, cv2.TM_CCOEFF_NORMED), nan=0.0)
        _, score, _, (x, y) = cv2.minMaxLoc(matches)
        logger.debug(f"NCC score {score:.3f} at ({x}, {y})")
        if score < self.lost_score:
            return None
        return LocalPrediction(kind="box", box=BBox(x + 0.5 * tw, y + 0.5 * th, float(tw), float(th)), confidence=score)


def ncc_tracker(lost_score: float = NCC_LOST_SCORE) -> NCCTracker:
    return NCCTracker(lost_score=lost_score)


class OracleTracker:
    """Returns the ground-truth mask of each frame seen through the current search grid."""

    kind: TrackerKind = "mask"

    def __init__(self, gt_masks: Sequence[np.ndarray]):
        self.gt_masks = gt_masks
        self.index = 0

    def init(self, local: LocalImage, target: Union[BBox, RBBox, np.ndarray]) -> None:
        self.index = 0

    def update(self, local: LocalImage) -> Optional[LocalPrediction]:
        self.index += 1
        if self.index >= len(self.gt_masks):
            raise TrackerError(f"No ground-truth mask for frame {self.index}")
        local_mask = extract_mask(self.gt_masks[self.index], local.grid)
        if not local_mask.any():
            return None
        return LocalPrediction(kind="mask", mask=local_mask, confidence=1.0)


TRACKERS = ("ncc", "oracle")


def make_tracker(name: str, gt_masks: Optional[Sequence[np.ndarray]] = None) -> LocalTracker:
    if name == "ncc":
        return ncc_tracker()
    if name == "oracle":
        if not gt_masks:
            raise TrackerError("The oracle tracker needs ground-truth masks")
        return OracleTracker(gt_masks)
    raise TrackerError(f"Unknown tracker {name!r}; expected one of {', '.join(TRACKERS)}")
