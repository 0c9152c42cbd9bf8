import json

import numpy as np
import pytest

from omnitrack import __version__
from omnitrack.cli import build_parser, main
from omnitrack.dataset_io import FRAMES_DIR, MASK_DIR, frame_name, read_frame, read_results, write_frame


def test_version(capsys):
    """--version prints the package version."""
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_with_two():
    """Missing or malformed arguments exit with code 2."""
    assert main([]) == 2
    assert main(["eval", "seq"]) == 2
    assert main(["unwarp", "img.png", "--bfov", "0,100,10,10,0"]) == 2
    assert main(["eval", "seq", "--results", "r", "--raster", "100x100"]) == 2


def test_invalid_option_values_exit_with_two(tmp_path):
    """Option values the pydantic models reject are usage errors too."""
    assert main(["synth", "--out", str(tmp_path / "s"), "--frames", "2", "--size", "96"]) == 0
    # a negative dilation radius is rejected by the search policy
    code = main(["track", str(tmp_path / "s"), "--tracker", "oracle", "--out", str(tmp_path / "r"), "--dilation-radius", "-1"])
    assert code == 2


def test_runtime_errors_exit_with_one(tmp_path):
    """Missing inputs fail at run time with code 1."""
    assert main(["convert", str(tmp_path)]) == 1
    assert main(["unwarp", str(tmp_path / "missing.png"), "--bfov", "0,0,60,60,0"]) == 1


def test_parser_defaults():
    """The track subcommand defaults."""
    args = build_parser().parse_args(["track", "a", "b", "--out", "r"])
    assert args.tracker == "ncc"
    assert args.jobs == 1
    assert args.local_size == 512
    assert args.expand_factor == 2.0
    assert args.min_fov == 30.0
    assert not args.tangent


def test_unwarp_writes_the_local_image(tmp_path):
    """unwarp writes <image>_local.png at the requested size."""
    image = np.full((240, 480, 3), 90, dtype=np.uint8)
    write_frame(tmp_path / "pano.png", image)
    assert main(["-q", "unwarp", str(tmp_path / "pano.png"), "--bfov", "0,60,120,90,0", "--size", "64", "--height", "32"]) == 0
    local = read_frame(tmp_path / "pano_local.png")
    assert local.shape == (32, 64, 3)
    assert np.all(local == 90)


def test_synth_track_and_eval_pipeline(tmp_path):
    """synth, convert, track and eval chained on a sequence crossing the seam."""
    seq = tmp_path / "seq" / "cross"
    assert main(["-q", "synth", "--kind", "border_cross", "--frames", "24", "--size", "480", "--rho", "12", "--out", str(seq)]) == 0
    assert (seq / FRAMES_DIR / frame_name(3)).is_file()

    # drop the derived files and rebuild them from the masks
    for name in ("bbox.txt", "rbbox.txt", "bfov.txt", "rbfov.txt", "attributes.json"):
        (seq / name).unlink()
    assert main(["-q", "convert", str(seq)]) == 0
    assert len((seq / "bfov.txt").read_text().splitlines()) == 24

    results = tmp_path / "results"
    assert main(["-q", "track", str(seq), "--tracker", "oracle", "--out", str(results), "--local-size", "256"]) == 0
    records = read_results(results / "cross")
    assert len(records) == 24
    assert all(record is not None and record.bfov is not None for record in records)
    assert (results / "cross" / MASK_DIR / frame_name(1)).is_file()
    assert not (results / "bfov.txt").exists()

    report_path = tmp_path / "report.json"
    code = main(["-q", "eval", str(seq), "--results", str(results), "--masks", "--raster", "480x240", "--report", str(report_path), "--tracker", "oracle"])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["tracker"] == "oracle"
    assert report["raster"] == "480x240"
    assert report["per_sequence"]["cross"]["frames"] == 24
    assert report["per_sequence"]["cross"]["attributes"]["CB"] is True
    assert report["aggregate"]["J_sphere"] >= 0.85
    assert report["aggregate"]["P_angle_3"] == pytest.approx(1.0)
    assert (tmp_path / "curves" / "S_dual.csv").is_file()


def test_eval_runs_sequences_in_parallel(tmp_path):
    """--jobs 2 evaluates two sequences into one report."""
    roots = []
    for name, kind in (("a", "static"), ("b", "great_circle")):
        root = tmp_path / name
        assert main(["-q", "synth", "--kind", kind, "--frames", "3", "--size", "240", "--out", str(root)]) == 0
        roots.append(str(root))
    # ground truth evaluated against itself
    code = main(["-q", "eval", *roots, "--results", str(tmp_path), "--jobs", "2", "--raster", "240x120"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report["per_sequence"]) == {"a", "b"}
    assert report["aggregate"]["S_dual_auc"] == pytest.approx(1.0)
