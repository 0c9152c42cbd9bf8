import math

import numpy as np
import pytest

from omnitrack.errors import BoxOutsideError, DimensionMismatchError, DomainError
from omnitrack.metrics import region_similarity
from omnitrack.regions import BBox, BFoV, RepresentationKind, bfov_region_mask, ebfov_grid
from omnitrack.remap import (
    default_dilation_radius,
    extract_mask,
    extract_region,
    lift_box,
    lift_box_all,
    lift_mask,
    local_box_from_mask,
    validate_erp_image,
)
from omnitrack.sphere_geom import ErpSize, LonLat, geodesic_angle, lonlat_to_pixel
from omnitrack.synth import CapSpec, cap_mask


def _coordinate_images(size: ErpSize):
    """Float images holding the continuous u and v of every pixel centre."""
    u = np.broadcast_to(np.arange(size.width, dtype=np.float32) + 0.5, size.shape).copy()
    v = np.broadcast_to((np.arange(size.height, dtype=np.float32) + 0.5)[:, None], size.shape).copy()
    return u, v


def test_extract_region_of_a_uniform_image():
    """A uniform panorama gives a uniform local image."""
    image = np.full((240, 480, 3), 77, dtype=np.uint8)
    local = extract_region(image, BFoV.from_degrees(10.0, 70.0, 100.0, 60.0), 64, 48)
    assert local.pixels.shape == (48, 64, 3)
    assert (local.width, local.height) == (64, 48)
    assert np.all(local.pixels == 77)


def test_extract_region_samples_at_the_grid_coordinates():
    """Bilinear lookups of a linear image return the lookup position."""
    size = ErpSize(960, 480)
    u_image, v_image = _coordinate_images(size)
    b = BFoV.from_degrees(0.0, 10.0, 60.0, 40.0)
    local_u = extract_region(u_image, b, 96, 64)
    local_v = extract_region(v_image, b, 96, 64)
    assert np.allclose(local_u.pixels, local_u.grid.u, atol=0.05)
    assert np.allclose(local_v.pixels, local_v.grid.v, atol=0.05)


def test_extract_region_wraps_across_the_seam():
    """Sampling continues across the seam."""
    size = ErpSize(960, 480)
    image = np.zeros(size.shape, dtype=np.uint8)
    image[:, size.width // 2:] = 255
    local = extract_region(image, BFoV.from_degrees(180.0, 0.0, 40.0, 40.0), 64, 64)
    # west of the seam is the right half of the image, east of it the left half
    assert local.pixels[:, :24].min() == 255
    assert local.pixels[:, -24:].max() == 0


def test_extract_region_over_the_pole():
    """Sampling continues over the pole."""
    size = ErpSize(960, 480)
    _, v_image = _coordinate_images(size)
    local = extract_region(v_image, BFoV.from_degrees(0.0, 90.0, 60.0, 60.0), 64, 64)
    # every sample is within 40 degrees of the pole
    assert local.pixels.max() < 0.23 * size.height


def test_validate_erp_image_rejects_bad_layouts():
    """Only (H, W) and (H, W, C) images are accepted."""
    assert validate_erp_image(np.zeros((4, 8, 3), np.uint8)) == ErpSize(8, 4)
    with pytest.raises(DimensionMismatchError):
        validate_erp_image(np.zeros((4, 8, 2), np.uint8))
    with pytest.raises(DomainError):
        validate_erp_image(np.zeros((4, 6), np.uint8))


def test_extract_then_lift_recovers_a_cap():
    """Extracting and lifting a cap gives the cap back."""
    size = ErpSize(960, 480)
    cap = cap_mask(CapSpec.from_degrees(20.0, -15.0, 10.0), size)
    grid = ebfov_grid(BFoV.from_degrees(20.0, -15.0, 60.0, 60.0), 512, 512, size)
    lifted = lift_mask(extract_mask(cap, grid), grid, size)
    assert region_similarity(cap, lifted) >= 0.95


def test_lift_full_local_mask_covers_the_region():
    """A full local mask lifts to the BFoV region."""
    size = ErpSize(960, 480)
    b = BFoV.from_degrees(-100.0, 30.0, 50.0, 40.0, 15.0)
    grid = ebfov_grid(b, 512, 512, size)
    lifted = lift_mask(np.ones(grid.shape, dtype=bool), grid, size)
    region = bfov_region_mask(b, size)
    assert region_similarity(region, lifted) >= 0.95


def test_lift_mask_rejects_mismatched_shapes():
    """Local masks must match the grid."""
    size = ErpSize(96, 48)
    grid = ebfov_grid(BFoV.from_degrees(0.0, 0.0, 40.0, 40.0), 16, 16, size)
    with pytest.raises(DimensionMismatchError):
        lift_mask(np.ones((8, 8), dtype=bool), grid, size)
    with pytest.raises(DimensionMismatchError):
        lift_mask(np.ones((16, 16), dtype=bool), grid, ErpSize(48, 24))
    assert not lift_mask(np.zeros((16, 16), dtype=bool), grid, size).any()


def test_default_dilation_radius():
    """The closing radius is the ERP to local width ratio, rounded up."""
    assert default_dilation_radius(ErpSize(1920, 960), 512) == 4
    assert default_dilation_radius(ErpSize(960, 480), 512) == 2


def test_lift_full_local_box_recovers_the_search_bfov():
    """The full local box lifts to the search BFoV."""
    size = ErpSize(1920, 960)
    b = BFoV.from_degrees(30.0, 10.0, 50.0, 40.0)
    grid = ebfov_grid(b, 512, 512, size)
    fov = lift_box(BBox(256.0, 256.0, 512.0, 512.0), grid, size, RepresentationKind.BFOV)
    assert math.degrees(geodesic_angle(fov.center, b.center)) < 0.1
    assert math.degrees(fov.theta) == pytest.approx(50.0, abs=1.0)
    assert math.degrees(fov.phi) == pytest.approx(40.0, abs=1.0)


def test_lift_tiny_centred_box_lands_on_the_centre():
    """A one-pixel central box lifts to the BFoV centre."""
    size = ErpSize(1920, 960)
    b = BFoV.from_degrees(-60.0, -25.0, 40.0, 40.0, 30.0)
    grid = ebfov_grid(b, 512, 512, size)
    box = lift_box(BBox(256.0, 256.0, 1.0, 1.0), grid, size, RepresentationKind.BBOX)
    expected = lonlat_to_pixel(LonLat(b.clon, b.clat), size)
    assert box.cx == pytest.approx(expected.u, abs=1.0)
    assert box.cy == pytest.approx(expected.v, abs=1.0)


def test_lift_box_across_the_seam_stays_narrow():
    """Lifted boxes on the seam do not span the panorama."""
    size = ErpSize(960, 480)
    grid = ebfov_grid(BFoV.from_degrees(180.0, 0.0, 40.0, 40.0), 128, 128, size)
    reps = lift_box_all(BBox(64.0, 64.0, 128.0, 128.0), grid, size)
    assert reps.bbox.w < size.width / 2
    assert min(reps.bbox.cx, size.width - reps.bbox.cx) < 2.0
    assert abs(abs(math.degrees(reps.bfov.clon)) - 180.0) < 0.5


def test_lift_box_outside_the_local_image():
    """Boxes outside the local image cannot be lifted."""
    size = ErpSize(960, 480)
    grid = ebfov_grid(BFoV.from_degrees(0.0, 0.0, 40.0, 40.0), 64, 64, size)
    with pytest.raises(BoxOutsideError):
        lift_box(BBox(-100.0, -100.0, 10.0, 10.0), grid, size, RepresentationKind.BBOX)


def test_local_box_from_mask():
    """Local masks are boxed without wrap."""
    mask = np.zeros((32, 32), dtype=bool)
    mask[4:10, 6:20] = True
    assert local_box_from_mask(mask) == BBox(13.0, 7.0, 14.0, 6.0)
    with pytest.raises(DomainError):
        local_box_from_mask(np.zeros((8, 8), dtype=bool))


@pytest.mark.parametrize("b", [BFoV.from_degrees(10.0, 20.0, 60.0, 40.0), BFoV.from_degrees(-70.0, -30.0, 150.0, 100.0, 15.0)])
def test_extract_region_is_exactly_equivariant_to_yaw(b):
    """Rolling the panorama by k columns and turning the BFoV by k pixels gives the same local image."""
    size = ErpSize(480, 240)
    image = np.random.default_rng(5).integers(0, 256, size.shape + (3,), dtype=np.uint8)
    local = extract_region(image, b, 63, 47)
    for k in (1, 7, 100, 240, 479):
        turned = BFoV(b.clon + k * 2.0 * math.pi / size.width, b.clat, b.theta, b.phi, b.gamma)
        shifted = extract_region(np.roll(image, k, axis=1), turned, 63, 47)
        assert np.array_equal(shifted.pixels, local.pixels), k


def test_pole_centred_extraction_undoes_polar_stretch():
    """A target near the pole is a round disc in a pole-centred local image."""
    size = ErpSize(960, 480)
    mask = cap_mask(CapSpec.from_degrees(0.0, 85.0, 10.0), size)
    local = extract_mask(mask, ebfov_grid(BFoV.from_degrees(0.0, 90.0, 60.0, 60.0), 128, 128, size))
    rows, cols = np.nonzero(local)
    assert rows.size > 100
    eigen = np.linalg.eigvalsh(np.cov(np.stack([cols, rows]).astype(np.float64)))
    assert math.sqrt(eigen[-1] / eigen[0]) < 1.1
    # the same target spans every ERP column
    assert mask.any(axis=0).all()


def test_lift_mask_is_monotone():
    """Anything lifted from a local mask is covered by the lifted full local image."""
    size = ErpSize(480, 240)
    rng = np.random.default_rng(9)
    for b in (BFoV.from_degrees(170.0, 10.0, 50.0, 40.0), BFoV.from_degrees(0.0, 70.0, 200.0, 120.0, 30.0)):
        grid = ebfov_grid(b, 64, 48, size)
        full = lift_mask(np.ones(grid.shape, dtype=bool), grid, size)
        for density in (0.05, 0.5):
            partial = lift_mask(rng.random(grid.shape) < density, grid, size)
            assert not (partial & ~full).any()


def test_lift_mask_defaults_to_the_sampling_stride():
    """Without an explicit radius the closing uses ceil(W / local width)."""
    size = ErpSize(960, 480)
    grid = ebfov_grid(BFoV.from_degrees(-40.0, 15.0, 50.0, 40.0), 96, 96, size)
    local = np.zeros(grid.shape, dtype=bool)
    local[20:70, 30:60] = True
    explicit = lift_mask(local, grid, size, dilation_radius=default_dilation_radius(size, 96))
    assert default_dilation_radius(size, 96) == 10
    assert np.array_equal(lift_mask(local, grid, size), explicit)
    assert not np.array_equal(lift_mask(local, grid, size, dilation_radius=0), explicit)
