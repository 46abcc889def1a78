"""Kiln dataset assembly and its CSV / GeoJSON encodings.

All writers are byte-deterministic: records are emitted by id, coordinates
with six decimals, LF line endings, UTF-8.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .emissions import POLLUTANTS, EmissionProfile
from .exposure import ExposureResult
from .geo import GeoPoint

CRS = "WGS84"
MINIMAL_HEADER = ("kiln_type", "lat", "lon")
EXTENDED_HEADER = (
    "id", "kiln_type", "lat", "lon", "district",
    "pm10_kg_day", "pm25_kg_day", "sox_kg_day", "nox_kg_day",
    "pm10_kg_yr", "pm25_kg_yr", "sox_kg_yr", "nox_kg_yr",
    "schools_1km", "hospitals_1km", "population_1km",
)
_POLLUTANT_KEYS = {"PM10": "pm10", "PM2.5": "pm25", "SOx": "sox", "NOx": "nox"}


class InventoryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KilnRecord:
    id: int
    kiln_type: int
    location: GeoPoint
    district: str = ""
    emissions: EmissionProfile | None = None
    exposure: ExposureResult | None = None

    def __post_init__(self):
        if self.kiln_type not in (0, 1):
            raise ValueError(f"kiln_type must be 0 (FCBK) or 1 (ZigZag), got {self.kiln_type}")


@dataclass(frozen=True)
class KilnDataset:
    records: tuple[KilnRecord, ...] = ()
    provenance: dict = field(default_factory=dict)
    crs: str = CRS

    def __post_init__(self):
        if self.crs != CRS:
            raise ValueError("kiln datasets are always WGS84")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")

    def sorted_records(self) -> list[KilnRecord]:
        return sorted(self.records, key=lambda r: r.id)


def parameter_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_provenance(params: dict) -> dict:
    return {"pipeline_version": __version__, "parameter_hash": parameter_hash(params)}


def _coord(v: float) -> str:
    return f"{v:.6f}"


def write_minimal_csv(dataset: KilnDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MINIMAL_HEADER)
        for r in dataset.sorted_records():
            w.writerow([r.kiln_type, _coord(r.location.lat), _coord(r.location.lon)])


def read_minimal_csv(path) -> KilnDataset:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != MINIMAL_HEADER:
            raise InventoryFormatError(f"{path}:1: expected header kiln_type,lat,lon")
        for row in rows:
            line = rows.line_num
            if len(row) != 3:
                raise InventoryFormatError(f"{path}:{line}: expected 3 columns, got {len(row)}")
            try:
                kiln_type = int(row[0])
                lat, lon = float(row[1]), float(row[2])
            except ValueError:
                raise InventoryFormatError(f"{path}:{line}: non-numeric field") from None
            if kiln_type not in (0, 1):
                raise InventoryFormatError(f"{path}:{line}: kiln_type {kiln_type} not in {{0, 1}}")
            try:
                loc = GeoPoint(lat, lon)
            except ValueError as exc:
                raise InventoryFormatError(f"{path}:{line}: {exc}") from None
            records.append(KilnRecord(len(records) + 1, kiln_type, loc))
    return KilnDataset(tuple(records))


def _fmt(v, spec=".2f") -> str:
    return "" if v is None else format(v, spec)


def _extended_row(r: KilnRecord) -> list[str]:
    row = [str(r.id), str(r.kiln_type), _coord(r.location.lat), _coord(r.location.lon), r.district]
    e = r.emissions
    row += [_fmt(e.daily_kg[p]) if e else "" for p in POLLUTANTS]
    row += [_fmt(e.seasonal_kg[p]) if e else "" for p in POLLUTANTS]
    x = r.exposure
    row += [str(x.schools_1km), str(x.hospitals_1km), _fmt(x.population_1km)] if x else ["", "", ""]
    return row


def write_extended_csv(dataset: KilnDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXTENDED_HEADER)
        for r in dataset.sorted_records():
            w.writerow(_extended_row(r))


def _properties(r: KilnRecord) -> dict:
    props: dict = {"id": r.id, "kiln_type": r.kiln_type, "district": r.district}
    e = r.emissions
    for p in POLLUTANTS:
        key = _POLLUTANT_KEYS[p]
        props[f"{key}_kg_day"] = e.daily_kg[p] if e else None
        props[f"{key}_kg_yr"] = e.seasonal_kg[p] if e else None
    props["brick_kg_day"] = e.daily_brick_mass_kg if e else None
    props["working_days"] = e.working_days if e else None
    x = r.exposure
    props["schools_1km"] = x.schools_1km if x else None
    props["hospitals_1km"] = x.hospitals_1km if x else None
    props["population_1km"] = x.population_1km if x else None
    return props


def to_geojson(dataset: KilnDataset) -> dict:
    return {
        "type": "FeatureCollection",
        "crs_name": dataset.crs,
        "provenance": dataset.provenance,
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [round(r.location.lon, 6), round(r.location.lat, 6)],
                },
                "properties": _properties(r),
            }
            for r in dataset.sorted_records()
        ],
    }


def write_geojson(dataset: KilnDataset, path) -> None:
    Path(path).write_text(json.dumps(to_geojson(dataset), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def _record_from_feature(i: int, feat: dict) -> KilnRecord:
    geom = feat.get("geometry") or {}
    if geom.get("type") != "Point":
        raise InventoryFormatError(f"feature {i}: geometry must be a Point")
    lon, lat = geom["coordinates"][:2]
    props = feat.get("properties") or {}
    emissions = None
    if props.get("pm10_kg_day") is not None:
        emissions = EmissionProfile(
            daily_kg={p: props[f"{_POLLUTANT_KEYS[p]}_kg_day"] for p in POLLUTANTS},
            seasonal_kg={p: props[f"{_POLLUTANT_KEYS[p]}_kg_yr"] for p in POLLUTANTS},
            daily_brick_mass_kg=props.get("brick_kg_day"),
            working_days=props.get("working_days"),
            kiln_type=props["kiln_type"],
        )
    exposure = None
    if props.get("schools_1km") is not None:
        exposure = ExposureResult(props["id"], props["schools_1km"], props["hospitals_1km"],
                                  props["population_1km"])
    try:
        return KilnRecord(int(props["id"]), int(props["kiln_type"]), GeoPoint(lat, lon),
                          props.get("district") or "", emissions, exposure)
    except (KeyError, ValueError) as exc:
        raise InventoryFormatError(f"feature {i}: {exc}") from None


def read_geojson(path) -> KilnDataset:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InventoryFormatError(f"{path}: malformed JSON: {exc}") from None
    if doc.get("type") != "FeatureCollection":
        raise InventoryFormatError(f"{path}: not a FeatureCollection")
    records = tuple(_record_from_feature(i, f) for i, f in enumerate(doc.get("features", [])))
    return KilnDataset(records, doc.get("provenance", {}))


def assign_districts(dataset: KilnDataset, boundaries_path, name_property: str = "district") -> KilnDataset:
    """Tag records with the name of the boundary polygon containing them."""
    from shapely.geometry import Point, shape
    from shapely.strtree import STRtree

    doc = json.loads(Path(boundaries_path).read_text(encoding="utf-8"))
    polys, names = [], []
    for feat in doc.get("features", []):
        polys.append(shape(feat["geometry"]))
        names.append(str((feat.get("properties") or {}).get(name_property, "")))
    tree = STRtree(polys)
    tagged = []
    for r in dataset.records:
        pt = Point(r.location.lon, r.location.lat)
        hits = sorted(int(i) for i in tree.query(pt, predicate="intersects"))
        tagged.append(replace(r, district=names[hits[0]] if hits else ""))
    return replace(dataset, records=tuple(tagged))


def build_dataset(points: Sequence[tuple[int, GeoPoint]], profiles: Sequence[EmissionProfile],
                  exposures: Sequence[ExposureResult] | None, params: dict) -> KilnDataset:
    """Join kiln (type, location) pairs with their emission and exposure rows."""
    records = []
    for i, ((kiln_type, loc), prof) in enumerate(zip(points, profiles), 1):
        exp = exposures[i - 1] if exposures is not None else None
        records.append(KilnRecord(i, kiln_type, loc, "", prof, exp))
    return KilnDataset(tuple(records), make_provenance(params))
