"""Counts of schools, hospitals and people within a radius of each kiln."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import GeoPoint, build_index, points_within_radius

log = logging.getLogger(__name__)

AMENITY_KINDS = ("school", "hospital")
EXPOSURE_RADIUS_M = 1000.0


@dataclass(frozen=True)
class AmenityPoint:
    kind: str
    location: GeoPoint
    name: str = ""


@dataclass(frozen=True)
class PopulationCell:
    location: GeoPoint
    population: float

    def __post_init__(self):
        if not self.population >= 0:
            raise ValueError("population must be non-negative")


@dataclass(frozen=True)
class ExposureResult:
    kiln_id: int
    schools_1km: int
    hospitals_1km: int
    population_1km: float
    population_cells: tuple[int, ...] = field(default=(), compare=False, repr=False)


@dataclass
class LoadReport:
    """Parsed points plus per-row problems; bad rows are skipped, not fatal."""

    points: list = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    skipped_kinds: int = 0


@dataclass(frozen=True)
class ExposureSummary:
    n_kilns: int
    pct_with_school: float
    pct_with_hospital: float
    population_raw: float
    population_dedup: float


def _geojson_points(path: Path):
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a GeoJSON FeatureCollection")
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "Point":
            yield i, None, props, "non-Point geometry"
            continue
        lon, lat = geom["coordinates"][:2]
        yield i, (lat, lon), props, None


def load_amenities(path, kinds: Sequence[str] = AMENITY_KINDS) -> LoadReport:
    """Amenities from CSV (``kind,lat,lon,name``) or a GeoJSON Point collection."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    report = LoadReport()

    def accept(where, kind, lat, lon, name):
        try:
            point = GeoPoint(float(lat), float(lon))
        except (TypeError, ValueError) as exc:
            report.errors.append(f"{path}:{where}: {exc}")
            return
        kind = (kind or "").strip().lower()
        if kind not in kinds:
            report.skipped_kinds += 1
            return
        report.points.append(AmenityPoint(kind, point, name or ""))

    if path.suffix.lower() in (".geojson", ".json"):
        for i, coords, props, problem in _geojson_points(path):
            if problem:
                report.errors.append(f"{path}:feature {i}: {problem}")
                continue
            accept(f"feature {i}", props.get("kind"), coords[0], coords[1], props.get("name"))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                accept(reader.line_num, row.get("kind"), row.get("lat"), row.get("lon"), row.get("name"))
    if report.skipped_kinds:
        log.warning("%s: skipped %d rows of unknown kind", path, report.skipped_kinds)
    return report


def load_population(path) -> LoadReport:
    """Population cells from CSV (``lat,lon,population``) or GeoJSON points."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    report = LoadReport()

    def accept(where, lat, lon, pop):
        try:
            report.points.append(PopulationCell(GeoPoint(float(lat), float(lon)), float(pop)))
        except (TypeError, ValueError) as exc:
            report.errors.append(f"{path}:{where}: {exc}")

    if path.suffix.lower() in (".geojson", ".json"):
        for i, coords, props, problem in _geojson_points(path):
            if problem:
                report.errors.append(f"{path}:feature {i}: {problem}")
                continue
            accept(f"feature {i}", coords[0], coords[1], props.get("population"))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                accept(reader.line_num, row.get("lat"), row.get("lon"), row.get("population"))
    return report


def exposure_for_kilns(kilns: Sequence[GeoPoint], amenities: Sequence[AmenityPoint] = (),
                       population_cells: Sequence[PopulationCell] = (),
                       radius_m: float = EXPOSURE_RADIUS_M,
                       kiln_ids: Sequence[int] | None = None) -> list[ExposureResult]:
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    ids = list(range(len(kilns))) if kiln_ids is None else list(kiln_ids)
    cell = max(radius_m, 1.0)
    school = np.array([a.kind == "school" for a in amenities], dtype=bool)
    hospital = np.array([a.kind == "hospital" for a in amenities], dtype=bool)
    pop = np.array([c.population for c in population_cells], dtype=float)
    a_index = build_index([a.location for a in amenities], cell)
    p_index = build_index([c.location for c in population_cells], cell)
    results = []
    for kid, k in zip(ids, kilns):
        near_a = points_within_radius(a_index, k, radius_m)
        near_p = points_within_radius(p_index, k, radius_m)
        results.append(ExposureResult(
            kiln_id=kid,
            schools_1km=int(school[near_a].sum()) if near_a else 0,
            hospitals_1km=int(hospital[near_a].sum()) if near_a else 0,
            population_1km=float(pop[near_p].sum()) if near_p else 0.0,
            population_cells=tuple(near_p),
        ))
    return sorted(results, key=lambda r: r.kiln_id)


def exposure_summary(results: Sequence[ExposureResult],
                     population_cells: Sequence[PopulationCell] = ()) -> ExposureSummary:
    """Share of kilns near a school / hospital and total exposed population.

    ``population_raw`` counts a cell once per kiln it is near;
    ``population_dedup`` counts every cell once.
    """
    if not results:
        raise ValueError("no exposure results to summarise")
    n = len(results)
    cells = sorted({c for r in results for c in r.population_cells})
    dedup = float(sum(population_cells[c].population for c in cells)) if population_cells else 0.0
    return ExposureSummary(
        n_kilns=n,
        pct_with_school=100.0 * sum(r.schools_1km > 0 for r in results) / n,
        pct_with_hospital=100.0 * sum(r.hospitals_1km > 0 for r in results) / n,
        population_raw=float(sum(r.population_1km for r in results)),
        population_dedup=dedup,
    )
