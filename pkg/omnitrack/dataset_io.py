"""Sequence, annotation and result persistence.

Sequence directory layout::

    <root>/frames/000000.png ...   ERP frames (W = 2H)
    <root>/mask/000000.png ...     optional 8-bit masks, 0 background / 255 target
    <root>/bbox.txt                cx,cy,w,h                           (pixels)
    <root>/rbbox.txt               cx,cy,w,h,gamma                     (pixels, degrees)
    <root>/bfov.txt                clon,clat,theta,phi,gamma           (degrees)
    <root>/rbfov.txt               clon,clat,theta,phi,gamma           (degrees)
    <root>/attributes.json         {"computed": {...}, "manual": {...}}

One line per frame; a blank line is a frame without that annotation.
Result directories use the same layout without ``frames/``.
"""

import json
import logging
import math
import re

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterator, List, Mapping, Optional, Sequence, Union

import cv2
import numpy as np

from omnitrack.errors import (
    AngleRangeError,
    AspectError,
    CountMismatchError,
    DomainError,
    FieldCountError,
    MissingFramesError,
    NumberFormatError,
    OmniTrackError,
    OutputError,
    SequenceLayoutError,
)
from omnitrack.regions import (
    AnnotationRecord,
    BBox,
    BFoV,
    RBBox,
    Representation,
    RepresentationKind,
    as_mask,
    mask_to_representations,
    representations_to_record,
)
from omnitrack.sphere_geom import ErpSize

if TYPE_CHECKING:
    from omnitrack.metrics import EvalReport


logger = logging.getLogger(__name__)

FRAME_DIGITS = 6
FRAMES_DIR = "frames"
MASK_DIR = "mask"
ATTRIBUTES_FILE = "attributes.json"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DECIMALS = 6

_FIELD_COUNTS = {
    RepresentationKind.BBOX: 4,
    RepresentationKind.RBBOX: 5,
    RepresentationKind.BFOV: 5,
    RepresentationKind.RBFOV: 5,
}
_FRAME_STEM = re.compile(r"^\d+$")


def frame_name(index: int, suffix: str = ".png") -> str:
    return f"{index:0{FRAME_DIGITS}d}{suffix}"


def annotation_path(root: Path, kind: RepresentationKind) -> Path:
    return Path(root) / f"{RepresentationKind(kind).value}.txt"


# ---------------------------------------------------------------------------
# Line formats
# ---------------------------------------------------------------------------

def _check_angle(value: float, low: float, high: float, label: str, line: str, low_open: bool = False) -> None:
    below = value <= low if low_open else value < low
    if below or value > high:
        bracket = "(" if low_open else "["
        raise AngleRangeError(f"{label}={value!r} outside {bracket}{low}, {high}] in {line!r}")


def parse_annotation_line(line: Union[str, bytes], kind: RepresentationKind) -> Representation:
    """Parse one annotation line; angles in the line are degrees.

    Raises:
        FieldCountError: Wrong number of comma-separated fields.
        NumberFormatError: A field is not a finite number, or a size is not positive.
        AngleRangeError: An angle is out of range.
    """
    kind = RepresentationKind(kind)
    if isinstance(line, (bytes, bytearray)):
        try:
            line = bytes(line).decode("utf-8")
        except UnicodeDecodeError as e:
            raise NumberFormatError(f"Annotation line is not valid UTF-8: {e}") from None
    parts = line.strip().split(",")
    expected = _FIELD_COUNTS[kind]
    if len(parts) != expected:
        raise FieldCountError(f"{kind.value} lines have {expected} fields, got {len(parts)} in {line!r}")
    values = []
    for part in parts:
        try:
            value = float(part.strip())
        except ValueError:
            raise NumberFormatError(f"Cannot parse number {part.strip()!r} in {line!r}") from None
        if not math.isfinite(value):
            raise NumberFormatError(f"Non-finite value {part.strip()!r} in {line!r}")
        values.append(value)

    if kind in (RepresentationKind.BBOX, RepresentationKind.RBBOX):
        if values[2] <= 0 or values[3] <= 0:
            raise NumberFormatError(f"Box size must be positive in {line!r}")
        if kind is RepresentationKind.BBOX:
            return BBox(*values)
        _check_angle(values[4], -360.0, 360.0, "gamma", line)
        return RBBox(values[0], values[1], values[2], values[3], math.radians(values[4]))

    clon, clat, theta, phi, gamma = values
    _check_angle(clon, -360.0, 360.0, "clon", line)
    _check_angle(clat, -90.0, 90.0, "clat", line)
    _check_angle(theta, 0.0, 360.0, "theta", line, low_open=True)
    _check_angle(phi, 0.0, 180.0, "phi", line, low_open=True)
    _check_angle(gamma, -360.0, 360.0, "gamma", line)
    return BFoV.from_degrees(clon, clat, theta, phi, gamma)


def format_annotation(value: Optional[Representation], kind: RepresentationKind) -> str:
    """Inverse of :func:`parse_annotation_line`; ``None`` formats as a blank line."""
    if value is None:
        return ""
    kind = RepresentationKind(kind)
    if kind is RepresentationKind.BBOX:
        assert isinstance(value, BBox)
        numbers = [value.cx, value.cy, value.w, value.h]
    elif kind is RepresentationKind.RBBOX:
        assert isinstance(value, RBBox)
        numbers = [value.cx, value.cy, value.w, value.h, math.degrees(value.gamma)]
    else:
        assert isinstance(value, BFoV)
        numbers = list(value.degrees())
    return ",".join(f"{number:.{DECIMALS}f}" for number in numbers)


def read_annotations(path: Path, kind: RepresentationKind) -> List[Optional[Representation]]:
    """Read an annotation file; blank lines become ``None``."""
    path = Path(path)
    values: List[Optional[Representation]] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            values.append(None)
            continue
        try:
            values.append(parse_annotation_line(line, kind))
        except OmniTrackError as e:
            raise type(e)(f"{path}:{number}: {e}") from None
    return values


def write_annotations(path: Path, values: Sequence[Optional[Representation]], kind: RepresentationKind) -> Path:
    path = Path(path)
    text = "".join(format_annotation(value, kind) + "\n" for value in values)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e
    return path


# ---------------------------------------------------------------------------
# Images and masks
# ---------------------------------------------------------------------------

def read_frame(path: Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise SequenceLayoutError(f"Cannot read frame image {path}")
    return image


def write_frame(path: Path, image: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create {path.parent}: {e}") from e
    if not cv2.imwrite(str(path), image):
        raise OutputError(f"Cannot write image {path}")
    return path


def read_mask(path: Path) -> np.ndarray:
    """Load an 8-bit mask as booleans (values above 127 are target)."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise SequenceLayoutError(f"Cannot read mask image {path}")
    return raw > 127


def write_mask(path: Path, mask: np.ndarray) -> Path:
    return write_frame(path, as_mask(mask).astype(np.uint8) * 255)


def record_mask(record: Optional[AnnotationRecord]) -> Optional[np.ndarray]:
    """The record's mask, loading it from ``mask_path`` when needed."""
    if record is None:
        return None
    if record.mask is not None:
        return as_mask(record.mask)
    if record.mask_path is not None:
        return read_mask(record.mask_path)
    return None


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

@dataclass
class SequenceManifest:
    name: str
    root: Path
    frames: List[Path]
    size: ErpSize
    masks: Optional[List[Path]] = None
    gt_paths: Dict[RepresentationKind, Path] = field(default_factory=dict)
    attributes_path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.frames)

    def load_frame(self, index: int) -> np.ndarray:
        image = read_frame(self.frames[index])
        if image.shape[:2] != self.size.shape:
            raise AspectError(f"Frame {self.frames[index]} has size {image.shape[1]}x{image.shape[0]}, expected {self.size}")
        return image

    def iter_frames(self) -> Iterator[np.ndarray]:
        for index in range(len(self.frames)):
            yield self.load_frame(index)

    def load_masks(self) -> List[np.ndarray]:
        if not self.masks:
            raise MissingFramesError(f"Sequence {self.name!r} has no masks")
        return [read_mask(path) for path in self.masks]

    def load_annotations(self) -> List[AnnotationRecord]:
        """Ground-truth records; masks stay on disk and are referenced by path."""
        records = [AnnotationRecord(frame=index) for index in range(len(self.frames))]
        for kind, path in self.gt_paths.items():
            for record, value in zip(records, read_annotations(path, kind)):
                setattr(record, kind.value, value)
        if self.masks:
            for record, path in zip(records, self.masks):
                record.mask_path = path
        return records

    def load_attributes(self) -> Dict[str, Dict[str, bool]]:
        if self.attributes_path is None:
            return {}
        return read_attributes(self.attributes_path)


def _image_files(directory: Path) -> List[Path]:
    files = [p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and _FRAME_STEM.match(p.stem)]
    return sorted(files, key=lambda p: int(p.stem))


def _line_count(path: Path) -> int:
    return len(path.read_text(encoding="utf-8").splitlines())


def load_sequence(root: Path) -> SequenceManifest:
    """Validate a sequence directory and describe it.

    Raises:
        MissingFramesError: ``frames/`` is missing or holds no images.
        CountMismatchError: Masks or annotation lines do not match the frame count.
        AspectError: Frames are not 2:1 equirectangular images.
    """
    root = Path(root)
    frames_dir = root / FRAMES_DIR
    if not frames_dir.is_dir():
        raise MissingFramesError(f"{root} has no {FRAMES_DIR}/ directory")
    frames = _image_files(frames_dir)
    if not frames:
        raise MissingFramesError(f"{frames_dir} holds no frame images")

    first = read_frame(frames[0])
    try:
        size = ErpSize.of(first)
    except DomainError:
        raise AspectError(f"{frames[0]} is {first.shape[1]}x{first.shape[0]}; ERP frames must have W = 2H") from None

    masks = None
    mask_dir = root / MASK_DIR
    if mask_dir.is_dir():
        masks = _image_files(mask_dir)
        if len(masks) != len(frames):
            raise CountMismatchError(f"{len(masks)} masks for {len(frames)} frames in {root}")

    gt_paths: Dict[RepresentationKind, Path] = {}
    for kind in RepresentationKind:
        path = annotation_path(root, kind)
        if path.is_file():
            lines = _line_count(path)
            if lines != len(frames):
                raise CountMismatchError(f"{path.name} has {lines} lines for {len(frames)} frames in {root}")
            gt_paths[kind] = path

    attributes = root / ATTRIBUTES_FILE
    manifest = SequenceManifest(
        name=root.name,
        root=root,
        frames=frames,
        size=size,
        masks=masks,
        gt_paths=gt_paths,
        attributes_path=attributes if attributes.is_file() else None,
    )
    logger.info(f"Loaded sequence {manifest.name!r}: {len(frames)} frames at {size}")
    return manifest


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

def _as_record(item, frame: int) -> Optional[AnnotationRecord]:
    if item is None or isinstance(item, AnnotationRecord):
        return item
    return item.to_record(frame)


def write_records(
    records: Sequence,
    out_dir: Path,
    kinds: Sequence[RepresentationKind] = tuple(RepresentationKind),
    masks: bool = True,
) -> Path:
    """Write per-frame records (``AnnotationRecord``, ``FrameResult`` or ``None``) in the sequence layout."""
    if not records:
        raise DomainError("Nothing to write: the result list is empty")
    out_dir = Path(out_dir)
    converted = [_as_record(item, index) for index, item in enumerate(records)]
    for kind in kinds:
        kind = RepresentationKind(kind)
        write_annotations(annotation_path(out_dir, kind), [r.get(kind) if r else None for r in converted], kind)
    if masks:
        for index, record in enumerate(converted):
            if record is not None and record.mask is not None:
                write_mask(out_dir / MASK_DIR / frame_name(index), record.mask)
    logger.info(f"Wrote {len(converted)} frames to {out_dir}")
    return out_dir


def write_results(results: Sequence, out_dir: Path) -> Path:
    """Write tracking results: the four annotation files plus mask PNGs when present."""
    return write_records(results, out_dir)


def read_results(out_dir: Path, frames: Optional[int] = None) -> List[Optional[AnnotationRecord]]:
    """Read a result directory; frames with no prediction at all are ``None``."""
    out_dir = Path(out_dir)
    columns: Dict[RepresentationKind, List[Optional[Representation]]] = {}
    for kind in RepresentationKind:
        path = annotation_path(out_dir, kind)
        if path.is_file():
            columns[kind] = read_annotations(path, kind)
    mask_dir = out_dir / MASK_DIR
    mask_files = {int(p.stem): p for p in _image_files(mask_dir)} if mask_dir.is_dir() else {}
    if not columns and not mask_files:
        raise MissingFramesError(f"{out_dir} holds no results")
    length = frames if frames is not None else max([len(c) for c in columns.values()] + [max(mask_files, default=-1) + 1])

    records: List[Optional[AnnotationRecord]] = []
    for index in range(length):
        record = AnnotationRecord(frame=index, mask_path=mask_files.get(index))
        for kind, values in columns.items():
            if index < len(values):
                setattr(record, kind.value, values[index])
        empty = record.mask_path is None and all(record.get(kind) is None for kind in RepresentationKind)
        records.append(None if empty else record)
    return records


def write_attributes(root: Path, computed: Mapping[str, bool], manual: Optional[Mapping[str, bool]] = None) -> Path:
    path = Path(root) / ATTRIBUTES_FILE
    payload = {"computed": dict(computed), "manual": dict(manual or {})}
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e
    return path


def read_attributes(path: Path) -> Dict[str, Dict[str, bool]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {"computed": dict(payload.get("computed", {})), "manual": dict(payload.get("manual", {}))}


def write_report(report: "EvalReport", path: Path) -> Path:
    """Write the report JSON and one ``curves/<metric>.csv`` per curve next to it."""
    path = Path(path)
    payload = report.to_dict()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        curves_dir = path.parent / "curves"
        curves_dir.mkdir(exist_ok=True)
        for name, samples in payload["curves"].items():
            lines = ["threshold,rate"] + [f"{threshold!r},{rate!r}" for threshold, rate in samples]
            (curves_dir / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Cannot write report {path}: {e}") from e
    logger.info(f"Wrote report {path}")
    return path


def read_report(path: Path) -> Dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def convert_sequence(root: Path) -> SequenceManifest:
    """Derive the four ground-truth files and computed attributes from a sequence's masks."""
    from omnitrack.metrics import compute_attributes

    manifest = load_sequence(root)
    if not manifest.masks:
        raise MissingFramesError(f"Sequence {manifest.name!r} has no {MASK_DIR}/ directory to convert")
    records = []
    for index, path in enumerate(manifest.masks):
        mask = read_mask(path)
        if mask.shape != manifest.size.shape:
            raise AspectError(f"Mask {path} does not match frame size {manifest.size}")
        if mask.any():
            record = representations_to_record(index, mask_to_representations(mask, manifest.size))
        else:
            record = AnnotationRecord(frame=index)
        record.mask_path = path
        records.append(record)
    write_records(records, manifest.root, masks=False)
    manual = manifest.load_attributes().get("manual")
    write_attributes(manifest.root, compute_attributes(records, manifest.size).as_dict(), manual)
    return load_sequence(manifest.root)
