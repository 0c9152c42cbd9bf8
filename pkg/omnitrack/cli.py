"""Command-line interface.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.
"""

import argparse
import logging
import math
import sys

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar

from pydantic import ValidationError

from omnitrack import __version__
from omnitrack.config import RASTER_ENV, EvalSettings, SearchPolicy, default_raster
from omnitrack.dataset_io import (
    SequenceManifest,
    convert_sequence,
    load_sequence,
    parse_annotation_line,
    read_frame,
    write_frame,
    write_report,
    write_results,
)
from omnitrack.errors import AnnotationParseError, DomainError, MissingFramesError, OmniTrackError
from omnitrack.framework import TRACKERS, make_tracker, track_sequence
from omnitrack.metrics import EvalReport, combine_reports, evaluate_sequence
from omnitrack.regions import BFoV, RepresentationKind, uses_tangent_plane
from omnitrack.remap import extract_region
from omnitrack.sphere_geom import ErpSize, LonLat
from omnitrack.synth import CapSpec, TrajectoryKind, generate_sequence, make_trajectory


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _bfov_arg(text: str) -> BFoV:
    try:
        value = parse_annotation_line(text, RepresentationKind.BFOV)
    except AnnotationParseError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    assert isinstance(value, BFoV)
    return value


def _raster_arg(text: str) -> ErpSize:
    try:
        return ErpSize.parse(text)
    except DomainError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _map(func: Callable[[T], R], items: Sequence[T], jobs: int) -> List[R]:
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_convert(args: argparse.Namespace) -> int:
    for root in args.seq_dirs:
        manifest = convert_sequence(root)
        logger.info(f"Converted {len(manifest)} masks of {manifest.name!r}")
    return 0


def cmd_unwarp(args: argparse.Namespace) -> int:
    image = read_frame(args.image)
    b: BFoV = args.bfov
    tangent = uses_tangent_plane(b.theta, b.phi, extended=not args.tangent)
    logger.info(f"eBFoV {tuple(round(v, 3) for v in b.degrees())}: using the {'tangent plane' if tangent else 'spherical surface'}")
    height = args.height or args.size
    local = extract_region(image, b, args.size, height, extended=not args.tangent)
    out = args.out or Path(args.image).with_name(f"{Path(args.image).stem}_local.png")
    write_frame(out, local.pixels)
    logger.info(f"Wrote {args.size}x{height} local image to {out}")
    return 0


def _track_one(args: argparse.Namespace, policy: SearchPolicy, root: Path) -> Path:
    manifest: SequenceManifest = load_sequence(root)
    masks = manifest.load_masks() if manifest.masks else None
    if masks is not None:
        init = masks[0]
    else:
        records = manifest.load_annotations()
        init = records[0].bfov
        if init is None:
            raise MissingFramesError(f"Sequence {manifest.name!r} has neither masks nor a first-frame BFoV to initialise from")
    tracker = make_tracker(args.tracker, gt_masks=masks)
    results = track_sequence(manifest.iter_frames(), init, tracker, policy)
    return write_results(results, Path(args.out) / manifest.name)


def cmd_track(args: argparse.Namespace) -> int:
    policy = SearchPolicy(
        expand_factor=args.expand_factor,
        min_fov_deg=args.min_fov,
        local_size=args.local_size,
        dilation_radius=args.dilation_radius,
        extended=not args.tangent,
    )
    _map(lambda root: _track_one(args, policy, root), list(args.seq_dirs), args.jobs)
    return 0


def _results_dir(results: Path, name: str) -> Path:
    nested = results / name
    return nested if nested.is_dir() else results


def cmd_eval(args: argparse.Namespace) -> int:
    settings = EvalSettings(
        raster=args.raster or default_raster(),
        box_kind=args.box_kind,
        fov_kind=args.fov_kind,
        masks=args.masks,
        contour_tol=args.contour_tol,
        angle_mode=args.angle_mode,
    )
    results = Path(args.results)

    def evaluate_one(root: Path) -> EvalReport:
        return evaluate_sequence(root, _results_dir(results, Path(root).name), settings=settings, tracker=args.tracker)

    reports = _map(evaluate_one, list(args.seq_dirs), args.jobs)
    report = combine_reports(reports, tracker=args.tracker, raster=settings.raster, settings=settings)
    path = write_report(report, args.report or results / "report.json")
    summary = ", ".join(f"{key}={value:.3f}" for key, value in report.aggregate.items())
    logger.info(f"Aggregate over {len(report.per_sequence)} sequence(s): {summary}")
    logger.info(f"Report written to {path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    size = ErpSize(args.size, args.size // 2)
    start = LonLat.from_degrees(args.lon, args.lat)
    trajectory = make_trajectory(args.kind, args.frames, start=start)
    cap = CapSpec(start, math.radians(args.rho), noise=args.noise)
    generate_sequence(trajectory, cap, size, Path(args.out), seed=args.seed)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from omnitrack.server import OmniTrackMCP

    server = OmniTrackMCP()
    if args.transport == "stdio":
        server.run(transport="stdio")
    else:
        server.run(transport=args.transport, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omnitrack", description="Omnidirectional tracking geometry and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="derive the four ground-truth files from masks")
    p.add_argument("seq_dirs", nargs="+", type=Path, metavar="seq_dir")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("unwarp", help="extract the local image of a BFoV from an ERP image")
    p.add_argument("image", type=Path)
    p.add_argument("--bfov", required=True, type=_bfov_arg, help="clon,clat,theta,phi,gamma in degrees")
    p.add_argument("--size", type=_positive_int, default=512, help="local image width (default: 512)")
    p.add_argument("--height", type=_positive_int, default=None, help="local image height (default: --size)")
    p.add_argument("--out", type=Path, default=None, help="output image (default: <image>_local.png)")
    p.add_argument("--tangent", action="store_true", help="always use the tangent plane (classic BFoV)")
    p.set_defaults(func=cmd_unwarp)

    p = sub.add_parser("track", help="run a local tracker through the 360 framework")
    p.add_argument("seq_dirs", nargs="+", type=Path, metavar="seq_dir")
    p.add_argument("--tracker", choices=TRACKERS, default="ncc")
    p.add_argument("--out", type=Path, required=True, help="results root; each sequence is written to <out>/<sequence name>/")
    p.add_argument("--jobs", type=_positive_int, default=1, help="sequences processed in parallel (default: 1)")
    p.add_argument("--expand-factor", type=float, default=2.0, help="search region expansion (default: 2.0)")
    p.add_argument("--min-fov", type=float, default=30.0, help="minimum search extent in degrees (default: 30)")
    p.add_argument("--local-size", type=_positive_int, default=512, help="local image size (default: 512)")
    p.add_argument("--dilation-radius", type=int, default=None, help="mask closing radius (default: ceil(W / local size))")
    p.add_argument("--tangent", action="store_true", help="always use the tangent plane for search regions")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="one-pass evaluation of results against ground truth")
    p.add_argument("seq_dirs", nargs="+", type=Path, metavar="seq_dir")
    p.add_argument("--results", type=Path, required=True, help="result directory (or root of per-sequence directories)")
    p.add_argument("--masks", action="store_true", help="also score masks (J, F and their spherical forms)")
    p.add_argument("--report", type=Path, default=None, help="report JSON path (default: <results>/report.json)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="sequences evaluated in parallel (default: 1)")
    p.add_argument("--raster", type=_raster_arg, default=None, help=f"spherical IoU raster WxH (default: ${RASTER_ENV} or 1920x960)")
    p.add_argument("--box-kind", choices=("bbox", "rbbox"), default="bbox")
    p.add_argument("--fov-kind", choices=("bfov", "rbfov"), default="bfov")
    p.add_argument("--angle-mode", choices=("geodesic", "literal"), default="geodesic")
    p.add_argument("--contour-tol", type=int, default=None, help="contour tolerance in pixels (default: 0.8%% of the diagonal)")
    p.add_argument("--tracker", default="tracker", help="tracker name recorded in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic cap sequence")
    p.add_argument("--kind", choices=[k.value for k in TrajectoryKind], default="static")
    p.add_argument("--frames", type=_positive_int, default=10)
    p.add_argument("--rho", type=float, default=10.0, help="cap radius in degrees (default: 10)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0, help="background noise seed (default: 0)")
    p.add_argument("--size", type=_positive_int, default=1920, help="ERP width; height is half (default: 1920)")
    p.add_argument("--lon", type=float, default=0.0, help="start longitude in degrees (default: 0)")
    p.add_argument("--lat", type=float, default=0.0, help="start latitude in degrees (default: 0)")
    p.add_argument("--noise", type=int, default=24, help="background noise amplitude (default: 24)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the MCP tool server")
    p.add_argument("--transport", choices=("stdio", "http", "sse"), default="stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except ValidationError as e:
        logger.error(f"invalid option: {e}")
        return 2
    except (OmniTrackError, OSError) as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
