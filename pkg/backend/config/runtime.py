from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator


class BoundsRuntimeConfig(BaseModel):
    cet4_min: float
    cet4_max: float
    gpa_min: float
    gpa_max: float

    @model_validator(mode="after")
    def _validate_order(self) -> BoundsRuntimeConfig:
        if self.cet4_min >= self.cet4_max:
            raise ValueError("dataset.bounds.cet4_min must be below cet4_max")
        if self.gpa_min >= self.gpa_max:
            raise ValueError("dataset.bounds.gpa_min must be below gpa_max")
        return self


class DatasetRuntimeConfig(BaseModel):
    bounds: BoundsRuntimeConfig
    histogram_bins: int = Field(ge=1)


class SyntheticRuntimeConfig(BaseModel):
    n: int = Field(ge=0)
    cet4_mean: float
    cet4_sd: float = Field(ge=0)
    gpa_mean: float
    gpa_sd: float = Field(ge=0)
    extrovert_prob: float = Field(ge=0, le=1)
    leader_prob: float = Field(ge=0, le=1)
    job_mix: dict[str, float]
    blob_sigma: float = Field(gt=0)
    blob_per_cluster: int = Field(ge=1)


class KMeansRuntimeConfig(BaseModel):
    init: Literal["random", "plusplus"]
    restarts: int = Field(ge=1)
    max_iter: int = Field(ge=1)
    tol: float = Field(ge=0)
    k_range: tuple[int, int]

    @model_validator(mode="after")
    def _validate_k_range(self) -> KMeansRuntimeConfig:
        k_min, k_max = self.k_range
        if k_min < 1 or k_min > k_max:
            raise ValueError("kmeans.k_range must satisfy 1 <= k_min <= k_max")
        return self


class PcaRuntimeConfig(BaseModel):
    max_sweeps: int = Field(ge=1)
    off_diagonal_tol: float = Field(gt=0)
    symmetry_tol: float = Field(gt=0)
    eigenvalue_floor: float = Field(le=0)


class MetricsRuntimeConfig(BaseModel):
    silhouette_space: Literal["feature", "pca"]


class GuidanceRuntimeConfig(BaseModel):
    majority_threshold: float = Field(gt=0, lt=1)


class PaletteEntry(BaseModel):
    name: str
    color: str
    shape: Literal["circle", "square", "diamond", "triangle"]


class VizRuntimeConfig(BaseModel):
    width: int = Field(ge=100)
    height: int = Field(ge=100)
    margin: int = Field(ge=0)
    hull_opacity: float = Field(ge=0, le=1)
    palette: list[PaletteEntry]

    @model_validator(mode="after")
    def _validate_palette(self) -> VizRuntimeConfig:
        if not self.palette:
            raise ValueError("viz.palette must not be empty")
        if 2 * self.margin >= min(self.width, self.height):
            raise ValueError("viz.margin leaves no drawing area")
        return self


class CliRuntimeConfig(BaseModel):
    output_dir: str
    emit: list[Literal["json", "svg", "text"]]
    default_seed: int = Field(ge=0, lt=2**64)
    log_level: str


class RuntimeConfig(BaseModel):
    dataset: DatasetRuntimeConfig
    synthetic: SyntheticRuntimeConfig
    kmeans: KMeansRuntimeConfig
    pca: PcaRuntimeConfig
    metrics: MetricsRuntimeConfig
    guidance: GuidanceRuntimeConfig
    viz: VizRuntimeConfig
    cli: CliRuntimeConfig

    @model_validator(mode="after")
    def _validate_job_mix(self) -> RuntimeConfig:
        total = sum(self.synthetic.job_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"synthetic.job_mix must sum to 1 (got {total})")
        return self


_runtime_config: RuntimeConfig | None = None


def get_runtime_config() -> RuntimeConfig:
    global _runtime_config
    if _runtime_config is None:
        _runtime_config = _load_runtime_config()
    return _runtime_config


def _load_runtime_config() -> RuntimeConfig:
    configured_path = os.getenv("RUNTIME_CONFIG_PATH", "").strip()
    runtime_path = (
        Path(configured_path)
        if configured_path
        else _default_runtime_path()
    )
    return RuntimeConfig.model_validate(_load_runtime_file(runtime_path))


def _default_runtime_path() -> Path:
    yaml_path = Path(__file__).resolve().with_name("runtime.yaml")
    if yaml_path.exists():
        return yaml_path

    raise FileNotFoundError(
        "Runtime config file not found: expected backend/config/runtime.yaml"
    )


def _load_runtime_file(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Runtime config file not found: {path}")

    suffix = path.suffix.lower()

    if suffix in {".yaml", ".yml"}:
        try:
            import yaml  # type: ignore
        except Exception as exc:
            raise RuntimeError(
                "PyYAML is required to load YAML runtime config files. "
                "Install it with: pip install pyyaml"
            ) from exc
        with path.open("r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    elif suffix == ".json":
        with path.open("r", encoding="utf-8") as f:
            raw = json.load(f)
    else:
        raise ValueError(
            f"Unsupported runtime config extension '{path.suffix}'. Use .yaml/.yml or .json"
        )

    if not isinstance(raw, dict):
        raise ValueError(f"Runtime config root must be an object in: {path}")

    return raw
