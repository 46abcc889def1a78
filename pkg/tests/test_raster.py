import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kiln_atlas.geo import GeoPoint
from kiln_atlas.raster import (GeoRef, RasterFormatError, RasterTile, compute_per_pixel_deltas,
                               geo_to_pixel, is_inside, load_tile, pixel_to_geo, sidecar_path,
                               store_tile, tile_aoi)


def test_per_pixel_deltas_examples():
    dlat, dlon = compute_per_pixel_deltas(GeoPoint(31.0, 74.0), GeoPoint(31.0, 74.1), 1000)
    assert dlat == 0
    assert dlon == pytest.approx(1e-4, rel=1e-12)
    dlat, _ = compute_per_pixel_deltas(GeoPoint(31.01, 74.0), GeoPoint(31.0, 74.01), 1280)
    assert dlat == pytest.approx(-7.8125e-6, rel=1e-9)
    with pytest.raises(ValueError):
        compute_per_pixel_deltas(GeoPoint(31, 74), GeoPoint(31, 74), 100)
    with pytest.raises(ValueError):
        compute_per_pixel_deltas(GeoPoint(31, 74), GeoPoint(31, 75), 0)


def test_georef_invariants():
    with pytest.raises(ValueError):
        GeoRef(0, 0, 0, 10, -1e-5, 1e-5)
    with pytest.raises(ValueError):
        GeoRef(0, 0, 10, 10, 0.0, 1e-5)


REF = GeoRef(31.0, 74.0, 1280, 1280, -5e-6, 5e-6)


def test_pixel_to_geo_examples():
    assert pixel_to_geo(REF, 640, 640) == GeoPoint(31.0, 74.0)
    p = pixel_to_geo(REF, 1280, 0)
    assert p.lat == pytest.approx(31.0032, abs=1e-12)
    assert p.lon == pytest.approx(74.0032, abs=1e-12)


def test_geo_to_pixel_examples():
    assert geo_to_pixel(REF, GeoPoint(31.0, 74.0)) == (640, 640)
    cx, cy = geo_to_pixel(REF, GeoPoint(31.0, 74.0 + REF.dlon_per_px))
    assert cx == pytest.approx(641, abs=1e-9) and cy == 640


def test_is_inside():
    assert is_inside(REF, 0, 1280)
    assert not is_inside(REF, -1, 5)


georefs = st.builds(
    GeoRef,
    st.floats(-60, 60), st.floats(-170, 170), st.integers(1, 4000), st.integers(1, 4000),
    st.floats(1e-7, 1e-3).map(lambda v: -v), st.floats(1e-7, 1e-3))


@given(georefs, st.floats(-0.5, 1.5), st.floats(-0.5, 1.5))
def test_round_trip(ref, u, v):
    cx, cy = u * ref.width_px, v * ref.height_px
    p = pixel_to_geo(ref, cx, cy)
    q = pixel_to_geo(ref, *geo_to_pixel(ref, p))
    assert abs(q.lat - p.lat) < 1e-9 and abs(q.lon - p.lon) < 1e-9


@given(georefs, st.floats(0, 1000), st.floats(0, 1000), st.floats(-50, 50), st.floats(-50, 50), st.floats(-3, 3))
def test_pixel_to_geo_is_affine(ref, x, y, dx, dy, t):
    a = pixel_to_geo(ref, x, y)
    b = pixel_to_geo(ref, x + dx, y + dy)
    c = pixel_to_geo(ref, x + t * dx, y + t * dy)
    # c - a is t * (b - a)
    assert c.lat - a.lat == pytest.approx(t * (b.lat - a.lat), abs=1e-9)
    assert c.lon - a.lon == pytest.approx(t * (b.lon - a.lon), abs=1e-9)


def test_tile_aoi_counts():
    # 100 km square straddling the equator, where both axes span ~111.3 km/deg
    half_lat = 50 / 110.574
    half_lon = 50 / 111.32
    grid = tile_aoi((-half_lat, 10 - half_lon, half_lat, 10 + half_lon), 1.0)
    assert len(grid.tiles) == 10_000
    assert grid.tile_ids[0] == "r0_c0" and grid.tile_ids[-1] == "r99_c99"
    small = tile_aoi((31.0, 74.0, 31.001, 74.001), 1.0)
    assert len(small.tiles) == 1


def test_tile_lon_span_at_31():
    grid = tile_aoi((31.0, 74.0, 31.0 + 10 / 110.574, 74.0 + 10 / (111.32 * math.cos(math.radians(31)))), 1.0)
    span = grid.tiles[0].width_px * grid.tiles[0].dlon_per_px
    assert span == pytest.approx(1 / (111.32 * math.cos(math.radians(31))), rel=2e-3)
    assert grid.tiles[0].width_px == 100


def test_tile_aoi_rejects_inverted():
    with pytest.raises(ValueError):
        tile_aoi((31, 74, 30, 75), 1.0)
    with pytest.raises(ValueError):
        tile_aoi((30, 75, 31, 74), 1.0)


@given(st.integers(0, 2**32 - 1))
def test_tiles_cover_and_are_disjoint(seed):
    rng = np.random.default_rng(seed)
    south, west = rng.uniform(20, 40), rng.uniform(60, 80)
    bbox = (south, west, south + rng.uniform(0.005, 0.08), west + rng.uniform(0.005, 0.08))
    grid = tile_aoi(bbox, float(rng.uniform(0.3, 2.0)))
    bounds = np.array([t.bounds() for t in grid.tiles])
    for lat, lon in zip(rng.uniform(bbox[0], bbox[2], 200), rng.uniform(bbox[1], bbox[3], 200)):
        inside = ((bounds[:, 0] <= lat) & (lat < bounds[:, 2]) & (bounds[:, 1] <= lon) & (lon < bounds[:, 3]))
        assert inside.sum() == 1


def _tile(w, h, seed=0, tile_id="t"):
    rng = np.random.default_rng(seed)
    px = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    return RasterTile(GeoRef(31.123456789, 74.5, w, h, -8.9e-5, 1.05e-4), px, tile_id)


@pytest.mark.parametrize("suffix", [".ppm", ".png"])
@pytest.mark.parametrize("w,h", [(37, 21), (1, 1)])
def test_store_load_round_trip(tmp_path, suffix, w, h):
    tile = _tile(w, h, tile_id="r3_c4")
    path = tmp_path / f"tile{suffix}"
    store_tile(tile, path)
    back = load_tile(path)
    assert back.georef == tile.georef
    assert back.tile_id == "r3_c4"
    assert np.array_equal(back.pixels, tile.pixels)


def test_sidecar_dimension_mismatch(tmp_path):
    path = tmp_path / "a.ppm"
    store_tile(_tile(8, 6), path)
    meta = json.loads(sidecar_path(path).read_text())
    meta["width_px"] = 9
    sidecar_path(path).write_text(json.dumps(meta))
    with pytest.raises(RasterFormatError, match="dimension mismatch"):
        load_tile(path)


def test_missing_sidecar(tmp_path):
    path = tmp_path / "a.ppm"
    store_tile(_tile(4, 4), path)
    sidecar_path(path).unlink()
    with pytest.raises(RasterFormatError, match="sidecar"):
        load_tile(path)


def test_unsupported_bit_depth(tmp_path):
    path = tmp_path / "deep.ppm"
    path.write_bytes(b"P6\n2 1\n65535\n" + bytes(12))
    sidecar_path(path).write_text(json.dumps(
        {"lat_center": 0, "lon_center": 0, "width_px": 2, "height_px": 1, "dlat_per_px": -1e-4, "dlon_per_px": 1e-4}))
    with pytest.raises(RasterFormatError, match="bit depth"):
        load_tile(path)


def test_zero_size_tile_rejected(tmp_path):
    path = tmp_path / "z.ppm"
    path.write_bytes(b"P6\n0 0\n255\n")
    sidecar_path(path).write_text(json.dumps(
        {"lat_center": 0, "lon_center": 0, "width_px": 0, "height_px": 0, "dlat_per_px": -1e-4, "dlon_per_px": 1e-4}))
    with pytest.raises(ValueError):
        load_tile(path)


def test_tile_pixels_are_read_only():
    tile = _tile(3, 3)
    with pytest.raises(ValueError):
        tile.pixels[0, 0, 0] = 1
