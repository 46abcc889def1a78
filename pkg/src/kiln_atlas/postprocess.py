"""Binary kiln mask -> deduplicated, density-capped candidate points.

Chain: drop isolated pixels, close with a square structuring element, label
8-connected blobs, map blob centroids to coordinates, drop near-duplicates,
cap the count per tile.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geo import GeoPoint, dedup_radius_indices
from .raster import GeoRef, pixel_to_geo

DEDUP_RADIUS_M = 20.0
MAX_PER_TILE = 15

_NEIGHBOURS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray  # (height, width) bool, row-major
    georef: GeoRef

    def __post_init__(self):
        if self.bits.dtype != bool or self.bits.ndim != 2:
            raise ValueError("mask bits must be a 2-D boolean array")
        if self.bits.shape != (self.georef.height_px, self.georef.width_px):
            raise ValueError("mask dimensions do not match georef")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def with_bits(self, bits: np.ndarray) -> "BinaryMask":
        return BinaryMask(bits, self.georef)


@dataclass(frozen=True)
class PixelCluster:
    members: tuple[tuple[int, int], ...]  # (x, y), raster order

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def centroid_px(self) -> tuple[float, float]:
        xs = sum(m[0] for m in self.members)
        ys = sum(m[1] for m in self.members)
        return xs / self.size, ys / self.size


@dataclass(frozen=True)
class CandidatePoint:
    location: GeoPoint
    source_tile: str
    cluster_size: int


def _window(bits: np.ndarray, r: int) -> np.ndarray:
    padded = np.pad(bits, r, constant_values=False)
    return sliding_window_view(padded, (2 * r + 1, 2 * r + 1))


def remove_isolated(mask: BinaryMask) -> BinaryMask:
    """Clear set pixels that have no set 8-neighbour."""
    bits = mask.bits
    counts = _window(bits, 1).sum(axis=(-1, -2)) - bits
    return mask.with_bits(bits & (counts > 0))


def dilate(bits: np.ndarray, r: int = 1) -> np.ndarray:
    return _window(bits, r).any(axis=(-1, -2)) if r else bits.copy()


def erode(bits: np.ndarray, r: int = 1) -> np.ndarray:
    return _window(bits, r).all(axis=(-1, -2)) if r else bits.copy()


def morphological_close(mask: BinaryMask, se_radius: int = 1) -> BinaryMask:
    """Dilate then erode with a (2r+1)^2 square.

    The mask is treated as embedded in an unbounded unset plane: dilation may
    spill past the border and erosion sees that spill, so closing stays
    extensive and idempotent at the edges.
    """
    r = int(se_radius)
    if r < 0:
        raise ValueError("se_radius must be non-negative")
    if r == 0:
        return mask.with_bits(mask.bits.copy())
    plane = np.pad(mask.bits, r, constant_values=False)
    closed = erode(dilate(plane, r), r)
    return mask.with_bits(closed[r:-r, r:-r])


def connected_components(mask: BinaryMask) -> list[PixelCluster]:
    """8-connected blobs ordered by their first pixel in raster order."""
    bits = mask.bits
    h, w = bits.shape
    seen = np.zeros_like(bits)
    clusters = []
    for y0, x0 in zip(*np.nonzero(bits)):
        if seen[y0, x0]:
            continue
        seen[y0, x0] = True
        queue = deque([(int(y0), int(x0))])
        members = []
        while queue:
            y, x = queue.popleft()
            members.append((x, y))
            for dy, dx in _NEIGHBOURS_8:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
        members.sort(key=lambda m: (m[1], m[0]))
        clusters.append(PixelCluster(tuple(members)))
    return clusters


def clusters_to_candidates(clusters, georef: GeoRef, tile_id: str) -> list[CandidatePoint]:
    out = []
    for c in clusters:
        cx, cy = c.centroid_px
        out.append(CandidatePoint(pixel_to_geo(georef, cx, cy), tile_id, c.size))
    return out


def _by_size(candidates) -> list[int]:
    # larger clusters first; sort is stable so ties keep cluster order
    return sorted(range(len(candidates)), key=lambda i: -candidates[i].cluster_size)


def cap_per_tile(candidates: list[CandidatePoint], limit: int = MAX_PER_TILE) -> list[CandidatePoint]:
    if len(candidates) <= limit:
        return list(candidates)
    keep = set(_by_size(candidates)[:limit])
    return [c for i, c in enumerate(candidates) if i in keep]


def dedup_candidates(candidates: list[CandidatePoint], radius_m: float = DEDUP_RADIUS_M):
    """Drop candidates within ``radius_m`` of a larger (or earlier) one; keeps order."""
    order = _by_size(candidates)
    survivors = dedup_radius_indices([candidates[i].location for i in order], radius_m)
    keep = {order[i] for i in survivors}
    return [c for i, c in enumerate(candidates) if i in keep]


def postprocess_tile(mask: BinaryMask, tile_id: str = "", se_radius: int = 1,
                     dedup_radius_m: float = DEDUP_RADIUS_M,
                     cap: int = MAX_PER_TILE) -> list[CandidatePoint]:
    cleaned = remove_isolated(mask)
    closed = morphological_close(cleaned, se_radius)
    clusters = connected_components(closed)
    candidates = clusters_to_candidates(clusters, mask.georef, tile_id)
    return cap_per_tile(dedup_candidates(candidates, dedup_radius_m), cap)


CANDIDATE_HEADER = ("tile_id", "lat", "lon", "cluster_size")


def write_candidates_csv(candidates, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANDIDATE_HEADER)
        for c in candidates:
            w.writerow([c.source_tile, f"{c.location.lat:.6f}", f"{c.location.lon:.6f}", c.cluster_size])


def read_candidates_csv(path) -> list[CandidatePoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [CandidatePoint(GeoPoint(float(r["lat"]), float(r["lon"])), r["tile_id"],
                               int(r["cluster_size"]))
                for r in csv.DictReader(fh)]
