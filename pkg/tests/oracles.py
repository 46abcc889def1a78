"""Independent reference computations used by the tests.

None of these call into the code paths they check: distances come from 3-D
unit vectors rather than the haversine formula, NMS from a fixed-point
iteration over a suppression matrix, dedup from an O(n^2) sweep.
"""

import math

import numpy as np

R = 6_371_000.0


def unit_vectors(lat, lon):
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def chord_distance(lat1, lon1, lat2, lon2):
    """Great-circle distance via atan2(|a x b|, a . b); broadcasts."""
    a = unit_vectors(lat1, lon1)
    b = unit_vectors(lat2, lon2)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return R * np.arctan2(cross, dot)


def dist(p, q):
    return float(chord_distance(p.lat, p.lon, q.lat, q.lon))


def north_of(lat, lon, meters):
    """Point exactly ``meters`` due north along the meridian."""
    return lat + math.degrees(meters / R), lon


def greedy_dedup(points, r):
    kept = []
    for i, p in enumerate(points):
        if all(dist(points[j], p) > r for j in kept):
            kept.append(i)
    return kept


def brute_within(lats, lons, center_lat, center_lon, r, chunk=4096):
    lats = np.asarray(lats)
    lons = np.asarray(lons)
    out = []
    for s in range(0, len(lats), chunk):
        d = chord_distance(center_lat, center_lon, lats[s:s + chunk], lons[s:s + chunk])
        out.extend((np.flatnonzero(d <= r) + s).tolist())
    return out


def box_iou_matrix(boxes):
    b = np.array([[x.x_min, x.y_min, x.x_max, x.y_max] for x in boxes], dtype=float).reshape(-1, 4)
    iw = np.clip(np.minimum(b[:, None, 2], b[None, :, 2]) - np.maximum(b[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(b[:, None, 3], b[None, :, 3]) - np.maximum(b[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area[:, None] + area[None, :] - inter
    return inter / union


def nms_fixed_point(boxes, thr, max_det):
    """Kept set as the fixed point of "not suppressed by a kept, higher-ranked box"."""
    if not boxes:
        return []
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].confidence, boxes[i].x_min, boxes[i].y_min))
    ranked = [boxes[i] for i in order]
    n = len(ranked)
    ious = box_iou_matrix(ranked)
    cls = np.array([b.kiln_class for b in ranked])
    higher = np.triu(np.ones((n, n), dtype=bool), k=1)  # [i, j]: i ranked above j
    suppress = higher & (cls[:, None] == cls[None, :]) & (ious > thr)
    kept = np.ones(n, dtype=bool)
    for _ in range(n + 1):
        new = ~(suppress & kept[:, None]).any(axis=0)
        if (new == kept).all():
            break
        kept = new
    return [ranked[i] for i in np.flatnonzero(kept)[:max_det]]
