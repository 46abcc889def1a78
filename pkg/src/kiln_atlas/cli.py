"""``kiln-atlas`` command line: train, detect-lowres, geolocate, inventory.

Exit codes: 0 success, 1 partial failure (some tiles/lines failed),
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .detections import (cross_image_dedup, fetch_plan, geolocate_image, group_candidates,
                         read_detections, read_kiln_points_csv, write_kiln_points_csv)
from .emissions import emission_profile_for_kiln
from .exposure import exposure_for_kilns, exposure_summary, load_amenities, load_population
from .forest import (classify_tile, evaluate, load_forest, read_training_csv, save_forest,
                     split_train_test, train_forest)
from .inventory import (assign_districts, build_dataset, write_extended_csv, write_geojson,
                        write_minimal_csv)
from .postprocess import postprocess_tile, write_candidates_csv
from .raster import load_tile

log = logging.getLogger("kiln_atlas")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
TILE_SUFFIXES = (".ppm", ".png")


def natural_key(s: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


def _pool_map(fn, items, workers: int, initializer=None, initargs=()):
    """Map in input order; serial when ``workers == 1``."""
    if workers <= 1 or len(items) <= 1:
        if initializer:
            initializer(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(fn, items))


def cmd_train(cfg: PipelineConfig) -> int:
    cfg.require("training_csv")
    data = read_training_csv(cfg.paths.training_csv)
    train, test = split_train_test(data, cfg.forest.train_fraction, cfg.forest.rng_seed)
    log.info("training %d trees on %d rows (%d held out)", cfg.forest.n_trees, len(train), len(test))
    forest = train_forest(train, cfg.forest, workers=cfg.workers)
    cfg.paths.output_dir.mkdir(parents=True, exist_ok=True)
    save_forest(forest, cfg.model_path)
    report = evaluate(forest.predict(test.rgb), test.labels, forest.schema).to_json()
    report["n_train"], report["n_test"] = len(train), len(test)
    report_path = cfg.paths.output_dir / "train_report.json"
    report_path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("test accuracy %.4f; model -> %s", report["accuracy"], cfg.model_path)
    return EXIT_OK


_FOREST = None


def _init_forest(model_path):
    global _FOREST
    _FOREST = load_forest(model_path)


def _detect_one(job):
    path, target_class, se_radius, dedup_m, cap = job
    try:
        tile = load_tile(path)
        mask = classify_tile(_FOREST, tile, target_class)
        return tile.tile_id, postprocess_tile(mask, tile.tile_id, se_radius, dedup_m, cap), None
    except Exception as exc:  # one bad tile must not abort the run
        return Path(path).stem, [], f"{path}: {type(exc).__name__}: {exc}"


def cmd_detect_lowres(cfg: PipelineConfig) -> int:
    cfg.require("model", "tiles_dir")
    tiles = sorted((p for p in Path(cfg.paths.tiles_dir).iterdir() if p.suffix.lower() in TILE_SUFFIXES),
                   key=lambda p: natural_key(p.stem))
    if not tiles:
        log.warning("no tiles found in %s", cfg.paths.tiles_dir)
    pp = cfg.postprocess
    jobs = [(str(p), pp.target_class, pp.se_radius, pp.dedup_radius_m, pp.cap) for p in tiles]
    results = _pool_map(_detect_one, jobs, cfg.workers, _init_forest, (str(cfg.model_path),))
    results.sort(key=lambda r: natural_key(r[0]))
    failures = [err for _, _, err in results if err]
    candidates = [c for _, cands, _ in results for c in cands]
    for err in failures:
        log.error("tile failed: %s", err)
    out = cfg.paths.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_candidates_csv(candidates, out / "candidates.csv")
    points = [c.location for c in candidates]
    groups = group_candidates(points, cfg.geolocate.group_radius_m)
    g = cfg.geolocate
    plan = fetch_plan(groups, g.zoom, g.scale, g.size_px)
    (out / "fetch_plan.json").write_text(json.dumps(plan, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("%d tiles, %d candidates, %d fetch groups, %d failures",
             len(tiles), len(candidates), len(groups), len(failures))
    return EXIT_PARTIAL if failures else EXIT_OK


def _geolocate_one(job):
    image, iou_threshold, max_det = job
    return geolocate_image(image, iou_threshold, max_det)


def cmd_geolocate(cfg: PipelineConfig) -> int:
    cfg.require("detections")
    images, errors = read_detections(cfg.paths.detections)
    for err in errors:
        log.error("malformed detection line: %s", err)
    images.sort(key=lambda im: im.image_id)
    g = cfg.geolocate
    per_image = _pool_map(_geolocate_one, [(im, g.iou_threshold, g.max_det) for im in images], cfg.workers)
    points = cross_image_dedup([p for pts in per_image for p in pts], g.cross_image_radius_m)
    cfg.paths.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.paths.kiln_points or cfg.paths.output_dir / "kiln_points.csv"
    write_kiln_points_csv(points, out)
    log.info("%d images, %d kiln points -> %s", len(images), len(points), out)
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_inventory(cfg: PipelineConfig) -> int:
    cfg.require("kiln_points")
    cfg.optional_exists("amenities", "population", "boundaries")
    try:
        points = read_kiln_points_csv(cfg.kiln_points_path)
    except ValueError as exc:
        raise ConfigError(f"inventory: reading kiln points: {exc}") from None
    partial = False
    profiles = {t: emission_profile_for_kiln(t, cfg.production, cfg.factors, cfg.reproduce_paper)
                for t in (0, 1)}
    locations = [p.location for p in points]
    exposures = None
    if cfg.paths.amenities or cfg.paths.population:
        amen = load_amenities(cfg.paths.amenities) if cfg.paths.amenities else None
        pop = load_population(cfg.paths.population) if cfg.paths.population else None
        for rep in (amen, pop):
            if rep is not None:
                for err in rep.errors:
                    log.error("exposure input: %s", err)
                partial |= bool(rep.errors)
        cells = pop.points if pop else []
        exposures = exposure_for_kilns(locations, amen.points if amen else [], cells,
                                       cfg.exposure_radius_m, kiln_ids=range(1, len(points) + 1))
        if exposures:
            s = exposure_summary(exposures, cells)
            log.info("kilns near a school %.1f%%, near a hospital %.1f%%, population raw %.0f / dedup %.0f",
                     s.pct_with_school, s.pct_with_hospital, s.population_raw, s.population_dedup)
    dataset = build_dataset([(p.kiln_class, p.location) for p in points],
                            [profiles[p.kiln_class] for p in points], exposures, cfg.as_params())
    if cfg.paths.boundaries:
        dataset = assign_districts(dataset, cfg.paths.boundaries)
    out = cfg.paths.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_minimal_csv(dataset, out / "kilns_minimal.csv")
    write_extended_csv(dataset, out / "kilns_extended.csv")
    write_geojson(dataset, out / "kilns.geojson")
    log.info("%d kiln records written to %s", len(dataset.records), out)
    return EXIT_PARTIAL if partial else EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "detect-lowres": cmd_detect_lowres,
    "geolocate": cmd_geolocate,
    "inventory": cmd_inventory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kiln-atlas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config (JSON)")
    parser.add_argument("--reproduce-paper", action=argparse.BooleanOptionalAction, default=None,
                        help="use the published 12,068 bricks/day instead of the computed quotient")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.reproduce_paper is not None:
            cfg.reproduce_paper = args.reproduce_paper
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
