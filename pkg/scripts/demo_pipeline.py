"""End-to-end run of all four CLI stages on a synthetic fixture.

Writes a training CSV and a few 100x100 px tiles with planted kiln patches,
runs train -> detect-lowres, fakes high-resolution detections from the fetch
plan (the real detector and imagery are out of scope), then runs geolocate ->
inventory and checks the recovered kilns against the planted ones.

    python3 scripts/demo_pipeline.py --out /tmp/kiln_demo --workers 2
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from kiln_atlas.cli import main as cli
from kiln_atlas.detections import read_kiln_points_csv, static_map_georef
from kiln_atlas.forest import LabeledPixelSet, write_training_csv
from kiln_atlas.geo import GeoPoint, haversine_distance
from kiln_atlas.raster import GeoRef, RasterTile, geo_to_pixel, pixel_to_geo, store_tile

KILN, FIELD = (200, 60, 40), (40, 215, 40)
CENTRES = [KILN, (215, 215, 40), (40, 40, 215), FIELD, (20, 90, 30), (160, 120, 80), (230, 210, 170),
           (128, 128, 128), (60, 60, 60), (120, 40, 160)]
LAYOUTS = [[(20, 20), (70, 60)], [(50, 50)], [(15, 80), (45, 15), (85, 85)], []]


def write_fixture(root: Path, rng):
    rgb = np.vstack([rng.normal(c, 4.0, (300, 3)) for c in CENTRES])
    labels = np.repeat(np.arange(1, 11), 300)
    write_training_csv(LabeledPixelSet(np.clip(np.rint(rgb), 0, 255), labels), root / "train.csv")

    (root / "tiles").mkdir(exist_ok=True)
    truth = []
    for k, kilns in enumerate(LAYOUTS):
        lat = 30.0 + 0.05 * k
        ref = GeoRef(lat, 72.0, 100, 100, -10 / 110_574, 10 / (111_320 * math.cos(math.radians(lat))))
        px = np.empty((100, 100, 3))
        px[:] = FIELD
        for x, y in kilns:
            px[y - 1:y + 2, x - 1:x + 2] = KILN
            truth.append(pixel_to_geo(ref, x, y))
        px = np.clip(np.rint(px + rng.normal(0, 4, px.shape)), 0, 255).astype(np.uint8)
        store_tile(RasterTile(ref, px, f"r0_c{k}"), root / "tiles" / f"tile_{k}.ppm")
    return truth


def fake_detections(plan, truth, path):
    lines = []
    for req in plan["requests"]:
        center = GeoPoint(req["center_lat"], req["center_lon"])
        ref = static_map_georef(center, plan["zoom"], plan["scale"], 1280)
        boxes = []
        for t in truth:
            x, y = geo_to_pixel(ref, t)
            if 30 <= x <= 1250 and 30 <= y <= 1250:
                boxes.append({"x_min": x - 20, "y_min": y - 20, "x_max": x + 20, "y_max": y + 20,
                              "class": 0, "confidence": 0.9})
        lines.append(json.dumps({"image_id": f"g{req['group']}", "center_lat": center.lat,
                                 "center_lon": center.lon, "zoom": plan["zoom"], "scale": plan["scale"],
                                 "size_px": 1280, "boxes": boxes}))
    path.write_text("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("demo_run"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = args.out
    root.mkdir(parents=True, exist_ok=True)

    truth = write_fixture(root, np.random.default_rng(args.seed))
    cfg = root / "config.json"
    cfg.write_text(json.dumps({
        "paths": {"training_csv": "train.csv", "tiles_dir": "tiles", "detections": "detections.jsonl",
                  "output_dir": "out"},
        "forest": {"n_trees": 50, "rng_seed": args.seed},
    }, indent=1))
    common = ["--config", str(cfg), "--workers", str(args.workers)]
    for stage in ("train", "detect-lowres"):
        if cli([stage, *common]) != 0:
            raise SystemExit(f"{stage} failed")
    fake_detections(json.loads((root / "out" / "fetch_plan.json").read_text()), truth, root / "detections.jsonl")
    for stage in ("geolocate", "inventory"):
        if cli([stage, *common]) != 0:
            raise SystemExit(f"{stage} failed")

    found = read_kiln_points_csv(root / "out" / "kiln_points.csv")
    hits = sum(any(haversine_distance(t, p.location) < 1.0 for p in found) for t in truth)
    print(f"planted {len(truth)} kilns, recovered {hits}, reported {len(found)}")
    print(f"outputs in {root / 'out'}")


if __name__ == "__main__":
    main()
