"""Spherical geodesy, a uniform grid index and greedy radius deduplication."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or math.isnan(self.lat):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0) or math.isnan(self.lon):
            raise ValueError(f"longitude out of range: {self.lon}")


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius ``EARTH_RADIUS_M``."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised haversine; arguments broadcast like numpy arrays (degrees)."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _local_xy(anchor: GeoPoint, lat, lon):
    cos0 = math.cos(math.radians(anchor.lat))
    x = np.radians(np.asarray(lon, dtype=float) - anchor.lon) * EARTH_RADIUS_M * cos0
    y = np.radians(np.asarray(lat, dtype=float) - anchor.lat) * EARTH_RADIUS_M
    return x, y


def _cell_window(anchor: GeoPoint, cell: float, center: GeoPoint, r: float):
    """Inclusive cell ranges ``(x0, x1, y0, y1)`` that can hold points within r."""
    ang = r / EARTH_RADIUS_M
    phi = math.radians(center.lat)
    # hav(d) >= cos(phi1) cos(phi2) hav(dlon) and |dlat| <= d: bound the
    # longitude span using the band edge nearest the pole.
    far_phi = min(math.pi / 2, abs(phi) + ang)
    denom = math.cos(phi) * math.cos(far_phi)
    hav_d = math.sin(ang / 2) ** 2
    if denom <= 0 or hav_d >= denom:
        dlon = math.pi
    else:
        dlon = 2 * math.asin(math.sqrt(hav_d / denom))
    bx = dlon * EARTH_RADIUS_M * math.cos(math.radians(anchor.lat))
    qx, qy = _local_xy(anchor, center.lat, center.lon)
    qx, qy = float(qx), float(qy)
    return (math.floor((qx - bx) / cell), math.floor((qx + bx) / cell),
            math.floor((qy - r) / cell), math.floor((qy + r) / cell))


def _window_keys(window, buckets):
    x0, x1, y0, y1 = window
    if (x1 - x0 + 1) * (y1 - y0 + 1) > len(buckets):
        return [k for k in buckets if x0 <= k[0] <= x1 and y0 <= k[1] <= y1]
    return [(i, j) for j in range(y0, y1 + 1) for i in range(x0, x1 + 1) if (i, j) in buckets]


@dataclass
class SpatialGridIndex:
    """Uniform square-cell bucket index over a local equirectangular projection.

    Points are projected to meters around ``anchor`` and bucketed by
    ``floor(x / cell_size), floor(y / cell_size)``.  Queries widen the window
    by an exact bound on the longitude span, so results never depend on
    projection error.
    """

    cell_size: float
    anchor: GeoPoint
    lats: np.ndarray
    lons: np.ndarray
    buckets: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.lats)

    def cells_for_query(self, center: GeoPoint, r: float) -> list[tuple[int, int]]:
        """Non-empty buckets inspected by a radius query."""
        return _window_keys(_cell_window(self.anchor, self.cell_size, center, r), self.buckets)


def build_index(points: Sequence[GeoPoint], cell_size: float,
                anchor: GeoPoint | None = None) -> SpatialGridIndex:
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    lats = np.array([p.lat for p in points], dtype=float)
    lons = np.array([p.lon for p in points], dtype=float)
    if anchor is None:
        anchor = GeoPoint(float(lats.mean()), float(lons.mean())) if len(points) else GeoPoint(0.0, 0.0)
    index = SpatialGridIndex(cell_size=float(cell_size), anchor=anchor, lats=lats, lons=lons)
    if not len(points):
        return index
    x, y = _local_xy(anchor, lats, lons)
    ix = np.floor(x / cell_size).astype(np.int64)
    iy = np.floor(y / cell_size).astype(np.int64)
    grouped: dict[tuple[int, int], list[int]] = defaultdict(list)
    for pid, key in enumerate(zip(ix.tolist(), iy.tolist())):
        grouped[key].append(pid)
    index.buckets = {k: np.array(v, dtype=np.int64) for k, v in grouped.items()}
    return index


def points_within_radius(index: SpatialGridIndex, center: GeoPoint, r: float) -> list[int]:
    """Ids of indexed points with haversine distance <= r, ascending."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    if not len(index):
        return []
    found = [index.buckets[k] for k in index.cells_for_query(center, r) if k in index.buckets]
    if not found:
        return []
    ids = np.concatenate(found)
    d = haversine_array(center.lat, center.lon, index.lats[ids], index.lons[ids])
    return sorted(ids[d <= r].tolist())


def dedup_radius(points: Sequence[GeoPoint], r: float) -> list[GeoPoint]:
    """Greedy keep-first sweep: keep a point iff it is > r from every kept point."""
    return [points[i] for i in dedup_radius_indices(points, r)]


class IncrementalGrid:
    """Growable bucket grid for sweeps that query only points added so far."""

    def __init__(self, anchor: GeoPoint, cell_size: float):
        self.anchor = anchor
        self.cell_size = float(cell_size)
        self.points: list[GeoPoint] = []
        self.ids: list[int] = []
        self.buckets: dict[tuple[int, int], list[int]] = defaultdict(list)

    def add(self, p: GeoPoint, ident: int) -> None:
        x, y = _local_xy(self.anchor, p.lat, p.lon)
        key = (math.floor(float(x) / self.cell_size), math.floor(float(y) / self.cell_size))
        self.buckets[key].append(len(self.points))
        self.points.append(p)
        self.ids.append(ident)

    def within(self, center: GeoPoint, r: float) -> list[int]:
        """Ids of added points within r of ``center``, in insertion order."""
        keys = _window_keys(_cell_window(self.anchor, self.cell_size, center, r), self.buckets)
        slots = sorted(s for k in keys for s in self.buckets[k]
                       if haversine_distance(self.points[s], center) <= r)
        return [self.ids[s] for s in slots]


def dedup_radius_indices(points: Sequence[GeoPoint], r: float) -> list[int]:
    """Index form of :func:`dedup_radius`, for callers that carry payloads."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    if not points:
        return []
    grid = IncrementalGrid(points[0], max(r, 1.0))
    kept: list[int] = []
    for i, p in enumerate(points):
        if not grid.within(p, r):
            grid.add(p, i)
            kept.append(i)
    return kept
