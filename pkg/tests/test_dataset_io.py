import json
import math
import time

import numpy as np
import pytest

from omnitrack.dataset_io import (
    FRAMES_DIR,
    MASK_DIR,
    convert_sequence,
    format_annotation,
    frame_name,
    load_sequence,
    parse_annotation_line,
    read_annotations,
    read_attributes,
    read_mask,
    read_report,
    read_results,
    write_annotations,
    write_frame,
    write_mask,
    write_records,
    write_report,
    write_results,
)
from omnitrack.errors import (
    AngleRangeError,
    AnnotationParseError,
    AspectError,
    CountMismatchError,
    FieldCountError,
    MissingFramesError,
    NumberFormatError,
    OmniTrackError,
    SequenceLayoutError,
)
from omnitrack.framework import FrameResult
from omnitrack.metrics import ope_evaluate
from omnitrack.regions import AnnotationRecord, BBox, BFoV, RBBox, RepresentationKind, mask_to_representations
from omnitrack.sphere_geom import ErpSize
from omnitrack.synth import CapSpec, TrajectoryKind, cap_mask, generate_sequence, make_trajectory


SIZE = ErpSize(360, 180)


def _write_masks_only(root, centres, size: ErpSize = SIZE):
    """A sequence directory with frames and masks but no annotation files."""
    for index, (lon, lat) in enumerate(centres):
        mask = cap_mask(CapSpec.from_degrees(lon, lat, 10.0), size)
        frame = np.zeros(size.shape + (3,), dtype=np.uint8)
        frame[mask] = 200
        write_frame(root / FRAMES_DIR / frame_name(index), frame)
        write_mask(root / MASK_DIR / frame_name(index), mask)


def test_parse_annotation_lines():
    """Valid lines of every kind, angles given in degrees."""
    assert parse_annotation_line("10,20,30,40", RepresentationKind.BBOX) == BBox(10, 20, 30, 40)
    assert parse_annotation_line(b" 1.5, 2 ,3,4 \n", RepresentationKind.BBOX) == BBox(1.5, 2, 3, 4)

    rbox = parse_annotation_line("5,6,8,4,90", RepresentationKind.RBBOX)
    assert isinstance(rbox, RBBox)
    assert rbox.gamma == pytest.approx(math.pi / 2)

    fov = parse_annotation_line("190,-30,60,40,15", RepresentationKind.BFOV)
    assert isinstance(fov, BFoV)
    assert fov.degrees() == pytest.approx((-170.0, -30.0, 60.0, 40.0, 15.0))


@pytest.mark.parametrize(
    "line, kind, error",
    [
        ("1,2,3", RepresentationKind.BBOX, FieldCountError),
        ("1,2,3,4,5", RepresentationKind.BBOX, FieldCountError),
        ("1,2,x,4", RepresentationKind.BBOX, NumberFormatError),
        ("1,2,nan,4", RepresentationKind.BBOX, NumberFormatError),
        ("1,2,0,4", RepresentationKind.BBOX, NumberFormatError),
        (b"\xff\xfe,1,2,3", RepresentationKind.BBOX, NumberFormatError),
        ("0,95,10,10,0", RepresentationKind.BFOV, AngleRangeError),
        ("0,0,0,10,0", RepresentationKind.BFOV, AngleRangeError),
        ("0,0,10,190,0", RepresentationKind.BFOV, AngleRangeError),
        ("400,0,10,10,0", RepresentationKind.RBFOV, AngleRangeError),
        ("1,2,3,4,500", RepresentationKind.RBBOX, AngleRangeError),
    ],
)
def test_parse_annotation_line_errors(line, kind, error):
    """Malformed lines raise the matching typed error."""
    with pytest.raises(error):
        parse_annotation_line(line, kind)


def test_parse_errors_carry_a_code():
    """Parse errors expose a stable code."""
    with pytest.raises(OmniTrackError) as info:
        parse_annotation_line("1,2", RepresentationKind.BBOX)
    assert isinstance(info.value, AnnotationParseError)
    assert isinstance(info.value, ValueError)
    assert info.value.code == "field_count"


def test_parser_survives_random_bytes():
    """A million random byte lines either parse or raise a typed error, each well under 100 ms."""
    rng = np.random.default_rng(21)
    count, stride = 1_000_000, 24
    noise = rng.integers(0, 256, count * stride, dtype=np.uint8).tobytes()
    alphabet = np.frombuffer(b"0123456789.,-+eE naif\t", dtype=np.uint8)
    numeric = alphabet[rng.integers(0, alphabet.size, count * stride)].tobytes()
    lengths = rng.integers(0, 2 * stride, count)
    kinds = list(RepresentationKind)
    slowest = 0.0
    for index in range(count):
        source = noise if index % 2 else numeric
        start = (index * stride) % (len(source) - 2 * stride)
        line = source[start:start + int(lengths[index])]
        began = time.perf_counter()
        try:
            parse_annotation_line(line, kinds[index % len(kinds)])
        except OmniTrackError:
            pass
        slowest = max(slowest, time.perf_counter() - began)
    assert slowest < 0.1


def test_format_annotation():
    """Formatting writes fixed decimals and None as a blank line."""
    assert format_annotation(None, RepresentationKind.BBOX) == ""
    assert format_annotation(BBox(1, 2, 3, 4), RepresentationKind.BBOX) == "1.000000,2.000000,3.000000,4.000000"
    line = format_annotation(BFoV.from_degrees(10.0, 20.0, 30.0, 40.0, 5.0), RepresentationKind.RBFOV)
    assert line == "10.000000,20.000000,30.000000,40.000000,5.000000"


def test_annotation_files_keep_blank_lines(tmp_path):
    """Blank lines survive a write and read as missing frames."""
    path = tmp_path / "bbox.txt"
    values = [BBox(1, 2, 3, 4), None, BBox(5, 6, 7, 8)]
    write_annotations(path, values, RepresentationKind.BBOX)
    assert path.read_text().splitlines()[1] == ""
    assert read_annotations(path, RepresentationKind.BBOX) == values


def test_read_annotations_reports_the_line_number(tmp_path):
    """A bad line is reported with its line number."""
    path = tmp_path / "bfov.txt"
    path.write_text("0,0,10,10,0\n0,100,10,10,0\n")
    with pytest.raises(AngleRangeError, match="bfov.txt:2"):
        read_annotations(path, RepresentationKind.BFOV)


def test_mask_round_trip(tmp_path):
    """Masks are written as 0/255 PNGs and read back unchanged."""
    mask = cap_mask(CapSpec.from_degrees(30.0, 10.0, 12.0), SIZE)
    path = write_mask(tmp_path / "m.png", mask)
    assert np.array_equal(read_mask(path), mask)
    with pytest.raises(SequenceLayoutError):
        read_mask(tmp_path / "missing.png")


def test_load_sequence_layout_errors(tmp_path):
    """A missing or empty frame directory and non-2:1 frames are rejected."""
    with pytest.raises(MissingFramesError):
        load_sequence(tmp_path)

    (tmp_path / FRAMES_DIR).mkdir()
    with pytest.raises(MissingFramesError):
        load_sequence(tmp_path)

    write_frame(tmp_path / FRAMES_DIR / frame_name(0), np.zeros((100, 300, 3), np.uint8))
    with pytest.raises(AspectError):
        load_sequence(tmp_path)


def test_load_sequence_count_mismatches(tmp_path):
    """Annotation and mask counts must match the frame count."""
    _write_masks_only(tmp_path, [(0.0, 0.0), (5.0, 0.0)])
    manifest = load_sequence(tmp_path)
    assert len(manifest) == 2
    assert manifest.size == SIZE
    assert manifest.gt_paths == {}

    (tmp_path / "bbox.txt").write_text("1,2,3,4\n")
    with pytest.raises(CountMismatchError):
        load_sequence(tmp_path)
    (tmp_path / "bbox.txt").unlink()

    (tmp_path / MASK_DIR / frame_name(1)).unlink()
    with pytest.raises(CountMismatchError):
        load_sequence(tmp_path)


def test_convert_sequence_writes_ground_truth(tmp_path):
    """convert writes the four annotation files from masks, seam included."""
    _write_masks_only(tmp_path, [(170.0, 0.0), (180.0, 0.0), (-170.0, 0.0)])
    manifest = convert_sequence(tmp_path)
    assert set(manifest.gt_paths) == set(RepresentationKind)
    for kind in RepresentationKind:
        assert len((tmp_path / f"{kind.value}.txt").read_text().splitlines()) == 3

    records = manifest.load_annotations()
    assert records[1].mask_path == tmp_path / MASK_DIR / frame_name(1)
    assert abs(abs(math.degrees(records[1].bfov.clon)) - 180.0) < 0.5
    attributes = read_attributes(tmp_path / "attributes.json")
    assert attributes["computed"]["CB"] is True
    assert attributes["manual"] == {}


def test_convert_sequence_keeps_manual_attributes(tmp_path):
    """Manual attributes survive a conversion."""
    _write_masks_only(tmp_path, [(0.0, 0.0), (0.0, 5.0)])
    (tmp_path / "attributes.json").write_text(json.dumps({"computed": {}, "manual": {"OCC": True}}))
    convert_sequence(tmp_path)
    assert read_attributes(tmp_path / "attributes.json")["manual"] == {"OCC": True}


def test_convert_sequence_needs_masks(tmp_path):
    """Converting a sequence without masks fails."""
    write_frame(tmp_path / FRAMES_DIR / frame_name(0), np.zeros(SIZE.shape + (3,), np.uint8))
    with pytest.raises(MissingFramesError):
        convert_sequence(tmp_path)


def test_convert_sequence_leaves_empty_masks_blank(tmp_path):
    """Empty masks become blank annotation lines."""
    _write_masks_only(tmp_path, [(0.0, 0.0), (0.0, 5.0)])
    write_mask(tmp_path / MASK_DIR / frame_name(1), np.zeros(SIZE.shape, dtype=bool))
    convert_sequence(tmp_path)
    assert (tmp_path / "bbox.txt").read_text().splitlines()[1] == ""


def test_results_round_trip(tmp_path):
    """Records with gaps round-trip through a result directory."""
    mask = cap_mask(CapSpec.from_degrees(0.0, 0.0, 10.0), SIZE)
    records = [
        AnnotationRecord(frame=0, bbox=BBox(10, 20, 30, 40), bfov=BFoV.from_degrees(0, 0, 20, 20), mask=mask),
        None,
        AnnotationRecord(frame=2, rbbox=RBBox(5, 6, 8, 4, 0.5)),
    ]
    write_records(records, tmp_path)
    assert (tmp_path / MASK_DIR / frame_name(0)).is_file()
    assert not (tmp_path / MASK_DIR / frame_name(2)).exists()

    loaded = read_results(tmp_path)
    assert len(loaded) == 3
    assert loaded[1] is None
    assert loaded[0].bbox == BBox(10, 20, 30, 40)
    assert loaded[0].bfov.degrees() == pytest.approx((0.0, 0.0, 20.0, 20.0, 0.0))
    assert loaded[0].mask_path is not None
    assert loaded[2].rbbox.gamma == pytest.approx(0.5, abs=1e-6)
    assert loaded[2].bbox is None

    padded = read_results(tmp_path, frames=5)
    assert padded[3] is None and padded[4] is None


def test_read_results_of_an_empty_directory(tmp_path):
    """A directory without results is an error."""
    with pytest.raises(MissingFramesError):
        read_results(tmp_path)


def test_write_tracking_results(tmp_path):
    """Tracking results are written as four annotation files plus masks."""
    mask = cap_mask(CapSpec.from_degrees(40.0, -10.0, 12.0), SIZE)
    reps = mask_to_representations(mask, SIZE)
    results = [
        FrameResult.from_representations(reps, mask=mask),
        FrameResult.from_representations(reps, confidence=0.0),
    ]
    write_results(results, tmp_path)
    for kind in RepresentationKind:
        assert len((tmp_path / f"{kind.value}.txt").read_text().splitlines()) == 2
    assert (tmp_path / MASK_DIR / frame_name(0)).is_file()
    assert not (tmp_path / MASK_DIR / frame_name(1)).exists()

    loaded = read_results(tmp_path)
    assert loaded[1].mask_path is None
    assert loaded[1].bfov.degrees() == pytest.approx(reps.bfov.degrees(), abs=1e-3)
    assert loaded[0].bbox.w == pytest.approx(reps.bbox.w, abs=1e-3)


def test_report_json_and_curves(tmp_path):
    """Reports are written as JSON with one CSV per curve."""
    manifest = generate_sequence(make_trajectory(TrajectoryKind.STATIC, 3), CapSpec.from_degrees(0.0, 0.0, 10.0), SIZE, tmp_path / "seq")
    gt = manifest.load_annotations()
    report = ope_evaluate(gt, gt, SIZE, name="seq", tracker="truth")
    path = write_report(report, tmp_path / "out" / "report.json")

    payload = read_report(path)
    assert payload["tracker"] == "truth"
    assert payload["per_sequence"]["seq"]["frames"] == 3
    assert payload["aggregate"]["S_dual_auc"] == pytest.approx(1.0)

    csv = (tmp_path / "out" / "curves" / "S_dual.csv").read_text().splitlines()
    assert csv[0] == "threshold,rate"
    assert len(csv) == 102
    assert float(csv[1].split(",")[1]) == pytest.approx(1.0)
