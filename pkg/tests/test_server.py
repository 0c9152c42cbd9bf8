import json
from typing import cast

import pytest
from fastmcp.client import Client
from fastmcp.exceptions import ToolError
from mcp.types import TextContent

from omnitrack.server import OmniTrackMCP
from omnitrack.synth import CapSpec, TrajectoryKind, generate_sequence, make_trajectory
from omnitrack.sphere_geom import ErpSize


def get_result_text(result):
    """Helper function to get text from result"""
    if hasattr(result, "content"):
        return cast(TextContent, result.content[0]).text
    return cast(TextContent, result[0]).text


async def _call(client, name, arguments):
    return json.loads(get_result_text(await client.call_tool(name, arguments)))


@pytest.mark.asyncio
async def test_tools_are_listed_with_annotations():
    """All tools are listed and only convert_masks writes."""
    server = OmniTrackMCP()
    async with Client(server) as client:
        tools = {tool.name: tool for tool in await client.list_tools()}
    assert {"pixel_to_lonlat", "lonlat_to_pixel", "geodesic_angle", "bfov_boundary", "next_search_region",
            "dual_success", "dual_precision", "angle_precision", "sphere_iou", "convert_masks", "evaluate"} <= set(tools)
    assert tools["sphere_iou"].annotations.readOnlyHint is True
    assert tools["convert_masks"].annotations.readOnlyHint is False
    assert tools["convert_masks"].annotations.destructiveHint is False


@pytest.mark.asyncio
async def test_coordinate_tools():
    """Coordinate tools take and return degrees."""
    server = OmniTrackMCP()
    async with Client(server) as client:
        assert await _call(client, "pixel_to_lonlat", {"u": 960, "v": 480}) == {"lon": 0.0, "lat": 0.0}
        pixel = await _call(client, "lonlat_to_pixel", {"lon": 90, "lat": 45, "width": 360, "height": 180})
        assert pixel["u"] == pytest.approx(270.0)
        assert pixel["v"] == pytest.approx(45.0)
        angle = await _call(client, "geodesic_angle", {"lon1": 0, "lat1": 89, "lon2": 180, "lat2": 89})
        assert angle == pytest.approx(2.0)


@pytest.mark.asyncio
async def test_box_metric_tools():
    """Box metric tools on the border-crossing example."""
    server = OmniTrackMCP()
    async with Client(server) as client:
        s = await _call(client, "dual_success", {"gt": [10, 500, 40, 40], "tr": [3830, 500, 40, 40], "width": 3840})
        assert s == pytest.approx(1 / 3)
        p = await _call(client, "dual_precision", {"gt_center": [10, 100], "tr_center": [3830, 100], "width": 3840})
        assert p == pytest.approx(20.0)
        literal = await _call(client, "angle_precision", {"gt": [0, 89], "tr": [180, 89], "mode": "literal"})
        assert literal == pytest.approx(180.0)


@pytest.mark.asyncio
async def test_region_tools():
    """Search region, outline and spherical IoU tools."""
    server = OmniTrackMCP()
    async with Client(server) as client:
        search = await _call(client, "next_search_region", {"bfov": [10, 20, 10, 10, 25]})
        assert [search[k] for k in ("clon", "clat", "theta", "phi", "gamma")] == pytest.approx([10, 20, 30, 30, 0])

        outline = await _call(client, "bfov_boundary", {"bfov": [180, 0, 60, 40, 0], "samples_per_edge": 16})
        assert outline["tangent"] is True
        assert len(outline["segments"]) >= 2

        iou = await _call(client, "sphere_iou", {"a": [0, 0, 180, 180, 0], "b": [90, 0, 180, 180, 0], "width": 720, "height": 360})
        assert iou == pytest.approx(1 / 3, rel=0.01)


@pytest.mark.asyncio
async def test_errors_carry_their_code():
    """Tool errors are prefixed with the error code."""
    server = OmniTrackMCP()
    async with Client(server) as client:
        with pytest.raises(ToolError, match=r"\[domain\]"):
            await client.call_tool("pixel_to_lonlat", {"u": 10, "v": 10, "width": 100, "height": 100})
        with pytest.raises(ToolError, match=r"\[domain\]"):
            await client.call_tool("sphere_iou", {"a": [0, 95, 10, 10], "b": [0, 0, 10, 10]})
        with pytest.raises(ToolError, match="got 3 values"):
            await client.call_tool("dual_success", {"gt": [1, 2, 3], "tr": [1, 2, 3, 4]})
        with pytest.raises(ToolError, match=r"\[missing_frames\]"):
            await client.call_tool("convert_masks", {"sequence_dir": "/nonexistent/omnitrack/sequence"})


@pytest.mark.asyncio
async def test_convert_and_evaluate_tools(tmp_path):
    """Converting then evaluating a sequence against itself."""
    size = ErpSize(240, 120)
    seq = tmp_path / "seq"
    generate_sequence(make_trajectory(TrajectoryKind.STATIC, 3), CapSpec.from_degrees(0.0, 0.0, 12.0), size, seq)
    (seq / "bbox.txt").unlink()

    server = OmniTrackMCP()
    async with Client(server) as client:
        converted = await _call(client, "convert_masks", {"sequence_dir": str(seq)})
        assert converted["frames"] == 3
        assert len(converted["files"]) == 4

        report = await _call(client, "evaluate", {"sequence_dir": str(seq), "results_dir": str(seq), "masks": True})
    assert "curves" not in report
    assert report["per_sequence"]["seq"]["frames"] == 3
    assert report["aggregate"]["J"] == pytest.approx(1.0)
    assert report["aggregate"]["S_dual_auc"] == pytest.approx(1.0)
