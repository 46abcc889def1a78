"""Georeferenced RGB tiles: pixel/geo conversion, AOI tiling and file I/O.

Tiles are stored as an 8-bit RGB raster (binary PPM or PNG) next to a JSON
sidecar ``<stem>.georef.json`` carrying the :class:`GeoRef` fields.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geo import GeoPoint

KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQUATOR = 111.32
SIDECAR_SUFFIX = ".georef.json"
GEOREF_KEYS = ("lat_center", "lon_center", "width_px", "height_px", "dlat_per_px", "dlon_per_px")


class RasterFormatError(ValueError):
    """Raised for malformed rasters, sidecars, or dimension mismatches."""


@dataclass(frozen=True)
class GeoRef:
    lat_center: float
    lon_center: float
    width_px: int
    height_px: int
    dlat_per_px: float
    dlon_per_px: float

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("raster dimensions must be positive")
        if self.dlat_per_px == 0 or self.dlon_per_px == 0:
            raise ValueError("per-pixel degree deltas must be non-zero")

    @property
    def center(self) -> GeoPoint:
        return GeoPoint(self.lat_center, self.lon_center)

    def bounds(self) -> tuple[float, float, float, float]:
        """(south, west, north, east) of the outer pixel edges."""
        lat_a = self.lat_center - self.height_px / 2 * self.dlat_per_px
        lat_b = self.lat_center + self.height_px / 2 * self.dlat_per_px
        lon_a = self.lon_center - self.width_px / 2 * self.dlon_per_px
        lon_b = self.lon_center + self.width_px / 2 * self.dlon_per_px
        return min(lat_a, lat_b), min(lon_a, lon_b), max(lat_a, lat_b), max(lon_a, lon_b)


@dataclass(frozen=True)
class RasterTile:
    georef: GeoRef
    pixels: np.ndarray  # (height, width, 3) uint8
    tile_id: str

    def __post_init__(self):
        px = self.pixels
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 3:
            raise RasterFormatError("pixels must be an (H, W, 3) uint8 array")
        if px.shape[:2] != (self.georef.height_px, self.georef.width_px):
            raise RasterFormatError(
                f"pixel grid {px.shape[1]}x{px.shape[0]} does not match georef "
                f"{self.georef.width_px}x{self.georef.height_px}")
        px.setflags(write=False)


@dataclass
class AoiGrid:
    south: float
    west: float
    north: float
    east: float
    tile_size_km: float
    tiles: list[GeoRef] = field(default_factory=list)
    tile_ids: list[str] = field(default_factory=list)


def compute_per_pixel_deltas(a: GeoPoint, b: GeoPoint, pixel_span: float) -> tuple[float, float]:
    """Degree change per pixel from two reference points ``pixel_span`` pixels apart.

    Signs follow ``b - a``.
    """
    if pixel_span <= 0:
        raise ValueError("pixel_span must be positive")
    if a == b:
        raise ValueError("reference points coincide; per-pixel deltas would be zero")
    return (b.lat - a.lat) / pixel_span, (b.lon - a.lon) / pixel_span


def pixel_to_geo(georef: GeoRef, cx: float, cy: float) -> GeoPoint:
    lat = georef.lat_center + (cy - georef.height_px / 2) * georef.dlat_per_px
    lon = georef.lon_center + (cx - georef.width_px / 2) * georef.dlon_per_px
    return GeoPoint(lat, lon)


def geo_to_pixel(georef: GeoRef, p: GeoPoint) -> tuple[float, float]:
    cx = georef.width_px / 2 + (p.lon - georef.lon_center) / georef.dlon_per_px
    cy = georef.height_px / 2 + (p.lat - georef.lat_center) / georef.dlat_per_px
    return cx, cy


def is_inside(georef: GeoRef, cx: float, cy: float) -> bool:
    """False when a pixel coordinate lies outside the image (extrapolation)."""
    return 0 <= cx <= georef.width_px and 0 <= cy <= georef.height_px


def _ceil_count(span: float, step: float) -> int:
    # tolerate float noise so that an exact multiple does not gain a sliver tile
    return max(1, math.ceil(span / step - 1e-9))


def tile_aoi(bbox, tile_size_km: float, pixel_size_m: float = 10.0) -> AoiGrid:
    """Cover ``bbox = (south, west, north, east)`` with square tiles.

    Rows are bands of constant latitude height, numbered from the north. Within
    a row the longitude step uses the degree-per-km factor at the row's center
    latitude; rows share edges and tiles within a row share edges.
    """
    south, west, north, east = bbox
    if not (north > south and east > west):
        raise ValueError("bbox must satisfy north > south and east > west")
    if tile_size_km <= 0 or pixel_size_m <= 0:
        raise ValueError("tile size and pixel size must be positive")
    side_px = max(1, round(tile_size_km * 1000 / pixel_size_m))
    dlat_tile = tile_size_km / KM_PER_DEG_LAT
    n_rows = _ceil_count(north - south, dlat_tile)
    grid = AoiGrid(south, west, north, east, tile_size_km)
    for row in range(n_rows):
        top = north - row * dlat_tile
        lat_mid = top - dlat_tile / 2
        km_per_deg_lon = KM_PER_DEG_LON_EQUATOR * math.cos(math.radians(lat_mid))
        dlon_tile = tile_size_km / km_per_deg_lon
        for col in range(_ceil_count(east - west, dlon_tile)):
            lon_mid = west + (col + 0.5) * dlon_tile
            grid.tiles.append(GeoRef(
                lat_center=lat_mid,
                lon_center=lon_mid,
                width_px=side_px,
                height_px=side_px,
                dlat_per_px=-dlat_tile / side_px,
                dlon_per_px=dlon_tile / side_px,
            ))
            grid.tile_ids.append(f"r{row}_c{col}")
    return grid


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + SIDECAR_SUFFIX)


def _read_ppm(data: bytes) -> np.ndarray:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace before the payload
    if tokens[0] != b"P6":
        raise RasterFormatError(f"unsupported PPM magic {tokens[0]!r}; only binary P6")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise RasterFormatError(f"unsupported bit depth (maxval {maxval}); only 8-bit")
    payload = data[pos:pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise RasterFormatError("PPM payload shorter than header dimensions")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "RGB":
            raise RasterFormatError(f"unsupported PNG mode {img.mode}; only 8-bit RGB")
        return np.asarray(img, dtype=np.uint8).copy()


def load_tile(path) -> RasterTile:
    path = Path(path)
    side = sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if not side.exists():
        raise RasterFormatError(f"missing georef sidecar {side}")
    meta = json.loads(side.read_text(encoding="utf-8"))
    missing = [k for k in GEOREF_KEYS if k not in meta]
    if missing:
        raise RasterFormatError(f"sidecar {side} lacks keys {missing}")
    georef = GeoRef(**{k: meta[k] for k in GEOREF_KEYS})
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        pixels = _read_ppm(path.read_bytes())
    elif suffix == ".png":
        pixels = _read_png(path)
    else:
        raise RasterFormatError(f"unsupported raster extension {suffix}")
    if pixels.shape[:2] != (georef.height_px, georef.width_px):
        raise RasterFormatError(
            f"dimension mismatch: raster {pixels.shape[1]}x{pixels.shape[0]}, "
            f"sidecar {georef.width_px}x{georef.height_px}")
    return RasterTile(georef, pixels, meta.get("tile_id", path.stem))


def store_tile(tile: RasterTile, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    h, w = tile.pixels.shape[:2]
    if suffix == ".ppm":
        path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(tile.pixels).tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(np.ascontiguousarray(tile.pixels), mode="RGB").save(path)
    else:
        raise RasterFormatError(f"unsupported raster extension {suffix}")
    meta = asdict(tile.georef)
    meta["tile_id"] = tile.tile_id
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
