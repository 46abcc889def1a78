"""Pipeline configuration loaded from a JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .emissions import EmissionFactors, ProductionParams, emission_config_from_dict
from .forest import ForestConfig


class ConfigError(ValueError):
    """Bad or missing configuration; the CLI maps it to exit code 2."""


@dataclass
class Paths:
    output_dir: Path = Path("out")
    training_csv: Path | None = None
    model: Path | None = None
    tiles_dir: Path | None = None
    detections: Path | None = None
    kiln_points: Path | None = None
    amenities: Path | None = None
    population: Path | None = None
    boundaries: Path | None = None


@dataclass
class PostprocessParams:
    target_class: int = 1
    se_radius: int = 1
    dedup_radius_m: float = 20.0
    cap: int = 15


@dataclass
class GeolocateParams:
    iou_threshold: float = 0.7
    max_det: int = 10
    cross_image_radius_m: float = 12.0
    group_radius_m: float = 335.0
    zoom: int = 17
    scale: int = 2
    size_px: int = 1280


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    forest: ForestConfig = field(default_factory=ForestConfig)
    postprocess: PostprocessParams = field(default_factory=PostprocessParams)
    geolocate: GeolocateParams = field(default_factory=GeolocateParams)
    factors: EmissionFactors = field(default_factory=EmissionFactors)
    production: ProductionParams = field(default_factory=ProductionParams)
    exposure_radius_m: float = 1000.0
    reproduce_paper: bool = True
    workers: int = 1

    @property
    def model_path(self) -> Path:
        return self.paths.model or self.paths.output_dir / "model.json"

    @property
    def kiln_points_path(self) -> Path:
        return self.paths.kiln_points or self.paths.output_dir / "kiln_points.csv"

    def require(self, *names: str) -> None:
        """Fail fast, naming the first declared input that is unset or missing."""
        for name in names:
            p = getattr(self.paths, name, None)
            if name == "model":
                p = self.model_path
            elif name == "kiln_points":
                p = self.kiln_points_path
            if p is None:
                raise ConfigError(f"config: paths.{name} is required")
            if not Path(p).exists():
                raise ConfigError(f"{name}: no such file or directory: {p}")

    def optional_exists(self, *names: str) -> None:
        for name in names:
            p = getattr(self.paths, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name}: no such file or directory: {p}")

    def as_params(self) -> dict:
        """Parameters that determine outputs (for provenance hashing)."""
        from dataclasses import asdict

        return {
            "forest": asdict(self.forest),
            "postprocess": asdict(self.postprocess),
            "geolocate": asdict(self.geolocate),
            "factors": dict(self.factors.g_per_kg),
            "production": asdict(self.production),
            "exposure_radius_m": self.exposure_radius_m,
            "reproduce_paper": self.reproduce_paper,
        }


def _section(cls, raw: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: invalid {name}: {exc}") from None


def config_from_dict(raw: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    known = {"paths", "forest", "postprocess", "geolocate", "emissions",
             "exposure_radius_m", "reproduce_paper", "workers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
    path_raw = dict(raw.get("paths", {}))
    for key, value in path_raw.items():
        if value is not None:
            p = Path(value)
            path_raw[key] = p if p.is_absolute() else base_dir / p
    try:
        factors, production = emission_config_from_dict(raw.get("emissions", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: invalid emissions: {exc}") from None
    cfg = PipelineConfig(
        paths=_section(Paths, path_raw, "paths"),
        forest=_section(ForestConfig, raw.get("forest", {}), "forest"),
        postprocess=_section(PostprocessParams, raw.get("postprocess", {}), "postprocess"),
        geolocate=_section(GeolocateParams, raw.get("geolocate", {}), "geolocate"),
        factors=factors,
        production=production,
        exposure_radius_m=float(raw.get("exposure_radius_m", 1000.0)),
        reproduce_paper=bool(raw.get("reproduce_paper", True)),
        workers=int(raw.get("workers", 1)),
    )
    if cfg.workers < 1:
        raise ConfigError("config: workers must be >= 1")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: no such file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path}: {exc}") from None
    return config_from_dict(raw, path.parent)
