"""Object detections on static-map images -> deduplicated kiln coordinates."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace

from .geo import GeoPoint, IncrementalGrid, dedup_radius_indices
from .raster import GeoRef, pixel_to_geo

log = logging.getLogger(__name__)

FCBK, ZIGZAG = 0, 1
KILN_TYPES = {FCBK: "FCBK", ZIGZAG: "ZigZag"}
MAX_MERCATOR_LAT = 85.05
TILE_SIZE_PX = 256

IOU_THRESHOLD = 0.7
MAX_DETECTIONS = 10
CROSS_IMAGE_RADIUS_M = 12.0
GROUP_RADIUS_M = 335.0


class DetectionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    kiln_class: int
    confidence: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0, 1]: {self.confidence}")
        if self.kiln_class not in KILN_TYPES:
            raise ValueError(f"unknown kiln class {self.kiln_class}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2


@dataclass(frozen=True)
class ImageDetections:
    image_id: str
    georef: GeoRef
    boxes: tuple[BBox, ...]


@dataclass(frozen=True)
class KilnPoint:
    location: GeoPoint
    kiln_class: int
    confidence: float
    image_id: str


@dataclass
class CandidateGroup:
    seed: int
    members: list[int]
    fetch_center: GeoPoint


def static_map_georef(center: GeoPoint, zoom: int, scale: int, size_px: int) -> GeoRef:
    """North-up georef of a Web-Mercator static map centred on ``center``.

    Longitude spacing is exact for Mercator; latitude spacing is the local
    linearisation ``-dlon * cos(lat)``.
    """
    if not 0 <= zoom <= 22:
        raise ValueError("zoom must lie in [0, 22]")
    if scale not in (1, 2):
        raise ValueError("scale must be 1 or 2")
    if size_px <= 0:
        raise ValueError("size_px must be positive")
    if abs(center.lat) > MAX_MERCATOR_LAT:
        raise ValueError("Web Mercator is undefined beyond +/-85.05 degrees latitude")
    dlon = 360.0 / (TILE_SIZE_PX * 2 ** zoom * scale)
    dlat = -dlon * math.cos(math.radians(center.lat))
    return GeoRef(center.lat, center.lon, size_px, size_px, dlat, dlon)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def nms(boxes, iou_threshold: float = IOU_THRESHOLD, max_det: int = MAX_DETECTIONS) -> list[BBox]:
    """Class-aware greedy non-maximum suppression."""
    order = sorted(boxes, key=lambda b: (-b.confidence, b.x_min, b.y_min))
    kept: list[BBox] = []
    while order and len(kept) < max_det:
        top = order.pop(0)
        kept.append(top)
        order = [b for b in order
                 if b.kiln_class != top.kiln_class or iou(top, b) <= iou_threshold]
    return kept


def bbox_to_geo(georef: GeoRef, box: BBox, image_id: str = "") -> KilnPoint:
    cx, cy = box.center
    return KilnPoint(pixel_to_geo(georef, cx, cy), box.kiln_class, box.confidence, image_id)


def group_candidates(points, group_radius_m: float = GROUP_RADIUS_M) -> list[CandidateGroup]:
    """Single pass: join the earliest group whose seed is in range, else found one."""
    if group_radius_m <= 0:
        raise ValueError("group radius must be positive")
    groups: list[CandidateGroup] = []
    if not points:
        return groups
    seeds = IncrementalGrid(points[0], group_radius_m)
    for i, p in enumerate(points):
        near = seeds.within(p, group_radius_m)
        if near:
            groups[near[0]].members.append(i)
        else:
            seeds.add(p, len(groups))
            groups.append(CandidateGroup(i, [i], p))
    for g in groups:
        lat = sum(points[i].lat for i in g.members) / len(g.members)
        lon = sum(points[i].lon for i in g.members) / len(g.members)
        g.fetch_center = GeoPoint(lat, lon)
    return groups


def cross_image_dedup(points, radius_m: float = CROSS_IMAGE_RADIUS_M) -> list[KilnPoint]:
    """Collapse detections of one kiln seen in several images.

    Priority is confidence (descending), then image id; output keeps that order.
    """
    ranked = sorted(points, key=lambda p: (-p.confidence, p.image_id))
    keep = dedup_radius_indices([p.location for p in ranked], radius_m)
    return [ranked[i] for i in keep]


def clamp_box(box: BBox, width: int, height: int) -> BBox | None:
    x0, x1 = max(0.0, box.x_min), min(float(width), box.x_max)
    y0, y1 = max(0.0, box.y_min), min(float(height), box.y_max)
    if x0 >= x1 or y0 >= y1:
        return None
    return replace(box, x_min=x0, y_min=y0, x_max=x1, y_max=y1)


def parse_detection_record(obj: dict) -> ImageDetections:
    georef = static_map_georef(GeoPoint(float(obj["center_lat"]), float(obj["center_lon"])),
                               int(obj["zoom"]), int(obj["scale"]), int(obj["size_px"]))
    boxes = []
    for raw in obj.get("boxes", []):
        box = BBox(float(raw["x_min"]), float(raw["y_min"]), float(raw["x_max"]),
                   float(raw["y_max"]), int(raw["class"]), float(raw["confidence"]))
        clamped = clamp_box(box, georef.width_px, georef.height_px)
        if clamped is None:
            log.warning("image %s: box outside the image dropped", obj["image_id"])
            continue
        boxes.append(clamped)
    return ImageDetections(str(obj["image_id"]), georef, tuple(boxes))


def read_detections(path) -> tuple[list[ImageDetections], list[str]]:
    """Parse a JSON-lines detections file.

    Returns the parsed images and one message per malformed line (with its
    1-based line number); malformed lines are skipped.
    """
    images, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                images.append(parse_detection_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(f"{path}:{lineno}: {type(exc).__name__}: {exc}")
    return images, errors


def geolocate_image(image: ImageDetections, iou_threshold: float = IOU_THRESHOLD,
                    max_det: int = MAX_DETECTIONS) -> list[KilnPoint]:
    return [bbox_to_geo(image.georef, b, image.image_id)
            for b in nms(image.boxes, iou_threshold, max_det)]


POINTS_HEADER = ("class", "lat", "lon", "confidence", "image_id")


def write_kiln_points_csv(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINTS_HEADER)
        for p in points:
            w.writerow([p.kiln_class, f"{p.location.lat:.6f}", f"{p.location.lon:.6f}",
                        f"{p.confidence:.6f}", p.image_id])


def read_kiln_points_csv(path) -> list[KilnPoint]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != POINTS_HEADER:
            raise DetectionFormatError(f"{path}: expected header {','.join(POINTS_HEADER)}")
        for row in reader:
            try:
                out.append(KilnPoint(GeoPoint(float(row["lat"]), float(row["lon"])),
                                     int(row["class"]), float(row["confidence"]), row["image_id"]))
            except (TypeError, ValueError) as exc:
                raise DetectionFormatError(f"{path}:{reader.line_num}: {exc}") from None
    return out


def fetch_plan(groups, zoom: int = 17, scale: int = 2, size_px: int = 1280) -> dict:
    """Static-map requests, one per candidate group (not executed here)."""
    side = size_px // scale
    return {
        "zoom": zoom,
        "scale": scale,
        "size": f"{side}x{side}",
        "requests": [
            {
                "group": k,
                "center_lat": round(g.fetch_center.lat, 6),
                "center_lon": round(g.fetch_center.lon, 6),
                "n_candidates": len(g.members),
                "members": g.members,
            }
            for k, g in enumerate(groups)
        ],
    }
