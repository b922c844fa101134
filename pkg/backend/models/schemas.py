from __future__ import annotations

import math
from enum import Enum
from typing import Literal

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator


# ---------------------------------------------------------------------------
# Shared config helper
# ---------------------------------------------------------------------------

def _frozen_config(**extra: object) -> ConfigDict:
    return ConfigDict(frozen=True, populate_by_name=True, **extra)


# ---------------------------------------------------------------------------
# Cohort records
# ---------------------------------------------------------------------------

class Personality(str, Enum):
    INTROVERT = "introvert"
    EXTROVERT = "extrovert"


class JobLabel(str, Enum):
    # Definition order is the tie-break order for dominant-job selection.
    SALES = "sales"
    MANAGEMENT = "management"
    TECHNICAL = "technical"
    PRODUCT = "product"
    OTHER = "other"


JOB_ORDER: tuple[JobLabel, ...] = tuple(JobLabel)


class StudentRecord(BaseModel):
    model_config = _frozen_config()

    serial: int = Field(gt=0)
    cet4: int
    gpa: float
    personality: Personality
    student_leader: bool
    job: JobLabel | None = Field(
        default=None,
        description="Observed job label; None for unlabelled cohorts",
    )


class ValidationBounds(BaseModel):
    model_config = _frozen_config()

    cet4_min: float = 300
    cet4_max: float = 710
    gpa_min: float = 0.0
    gpa_max: float = 5.0

    @model_validator(mode="after")
    def _validate_order(self) -> ValidationBounds:
        if self.cet4_min >= self.cet4_max:
            raise ValueError("cet4_min must be below cet4_max")
        if self.gpa_min >= self.gpa_max:
            raise ValueError("gpa_min must be below gpa_max")
        return self


class Rejection(BaseModel):
    model_config = _frozen_config()

    serial: int
    reason: str


# ---------------------------------------------------------------------------
# Cohort summary
# ---------------------------------------------------------------------------

class HistogramBin(BaseModel):
    model_config = _frozen_config()

    lower: float
    upper: float
    count: int = Field(ge=0)


class FeatureSummary(BaseModel):
    model_config = _frozen_config()

    count: int = Field(ge=1)
    mean: float
    median: float
    p25: float
    p75: float
    min: float
    max: float
    histogram: list[HistogramBin]

    @model_validator(mode="after")
    def _validate_quartiles(self) -> FeatureSummary:
        if not (self.p25 <= self.median <= self.p75):
            raise ValueError("quartiles must satisfy p25 <= median <= p75")
        if sum(b.count for b in self.histogram) != self.count:
            raise ValueError("histogram counts must sum to count")
        return self


class CohortSummary(BaseModel):
    model_config = _frozen_config()

    count: int
    cet4: FeatureSummary
    gpa: FeatureSummary
    extrovert_fraction: float = Field(ge=0, le=1)
    leader_fraction: float = Field(ge=0, le=1)
    job_counts: dict[str, int] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

class JobArchetype(BaseModel):
    """Feature distribution used for records drawn with a given job."""

    model_config = _frozen_config()

    cet4_mean: float
    cet4_sd: float = Field(ge=0)
    gpa_mean: float
    gpa_sd: float = Field(ge=0)
    extrovert_prob: float = Field(ge=0, le=1)
    leader_prob: float = Field(ge=0, le=1)


class SyntheticSpec(BaseModel):
    model_config = _frozen_config()

    n: int = Field(ge=0)
    cet4_mean: float = 505.18
    cet4_sd: float = Field(default=55.0, ge=0)
    gpa_mean: float = 2.99
    gpa_sd: float = Field(default=0.45, ge=0)
    extrovert_prob: float = Field(default=0.8, ge=0, le=1)
    leader_prob: float = Field(default=0.4, ge=0, le=1)
    job_mix: dict[JobLabel, float] = Field(
        default_factory=lambda: {job: 1.0 / len(JOB_ORDER) for job in JOB_ORDER}
    )
    bounds: ValidationBounds = Field(default_factory=ValidationBounds)
    archetypes: dict[JobLabel, JobArchetype] | None = None

    @model_validator(mode="after")
    def _validate_mix(self) -> SyntheticSpec:
        if not self.job_mix:
            raise ValueError("job_mix must not be empty")
        if any(p < 0 or p > 1 for p in self.job_mix.values()):
            raise ValueError("job_mix probabilities must lie in [0, 1]")
        total = math.fsum(self.job_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"job_mix must sum to 1 within 1e-9 (got {total!r})")
        if math.ceil(self.bounds.cet4_min) > math.floor(self.bounds.cet4_max):
            raise ValueError("cet4 bounds admit no integer score")
        return self


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

class FeatureRange(BaseModel):
    model_config = _frozen_config()

    x_min: float = Field(alias="min")
    x_max: float = Field(alias="max")

    @model_validator(mode="after")
    def _validate_span(self) -> FeatureRange:
        if not self.x_max > self.x_min:
            raise ValueError("x_max must be strictly greater than x_min")
        return self

    @property
    def span(self) -> float:
        return self.x_max - self.x_min


class ScalerParams(BaseModel):
    model_config = _frozen_config()

    cet4: FeatureRange
    gpa: FeatureRange

    def range_for(self, feature: str) -> FeatureRange:
        if feature not in ("cet4", "gpa"):
            raise KeyError(f"Unknown scaled feature: {feature}")
        return getattr(self, feature)

    def with_overrides(self, overrides: dict[str, tuple[float, float]]) -> ScalerParams:
        """Return a copy with fixed (min, max) ranges replacing fitted ones."""
        update = {
            name: FeatureRange(min=lo, max=hi) for name, (lo, hi) in overrides.items()
        }
        for name in update:
            self.range_for(name)
        return self.model_copy(update=update)


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

class InitMethod(str, Enum):
    RANDOM_POINTS = "random"
    PLUS_PLUS = "plusplus"


class KMeansConfig(BaseModel):
    model_config = _frozen_config()

    k: int = Field(ge=1)
    init: InitMethod = InitMethod.PLUS_PLUS
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_iter: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-9, ge=0)
    restarts: int = Field(default=10, ge=1)


class ElbowPoint(BaseModel):
    model_config = _frozen_config()

    k: int = Field(ge=1)
    sse: float = Field(ge=0)


class ElbowCurve(BaseModel):
    model_config = _frozen_config()

    points: list[ElbowPoint]
    warnings: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _validate_order(self) -> ElbowCurve:
        ks = [p.k for p in self.points]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("elbow curve k values must be strictly increasing")
        return self

    def to_csv(self) -> str:
        frame = pd.DataFrame(
            {"k": [str(p.k) for p in self.points], "sse": [repr(p.sse) for p in self.points]}
        )
        return frame.to_csv(index=False, lineterminator="\n")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class SilhouetteReport(BaseModel):
    model_config = _frozen_config()

    per_point: list[float]
    per_cluster_mean: dict[int, float]
    overall_mean: float


class MetricBundle(BaseModel):
    model_config = _frozen_config(ser_json_inf_nan="constants")

    silhouette_mean: float | None = None
    per_cluster: dict[int, float] | None = None
    calinski_harabasz: float | None = None
    ari: float | None = None
    homogeneity: float | None = None
    space: Literal["feature", "pca"] = "feature"

    def is_empty(self) -> bool:
        return all(
            value is None
            for value in (
                self.silhouette_mean,
                self.calinski_harabasz,
                self.ari,
                self.homogeneity,
            )
        )


# ---------------------------------------------------------------------------
# Guidance
# ---------------------------------------------------------------------------

class ClusterProfile(BaseModel):
    model_config = _frozen_config()

    cluster_id: int = Field(ge=0)
    size: int = Field(ge=1)
    mean_cet4: float
    mean_gpa: float
    extrovert_fraction: float = Field(ge=0, le=1)
    leader_fraction: float = Field(ge=0, le=1)
    dominant_job: JobLabel | None = None


class GuidanceRule(BaseModel):
    model_config = _frozen_config()

    id: str
    job: JobLabel
    min_gpa: float | None = None
    min_cet: float | None = None
    requires_extrovert_majority: bool | None = None
    requires_leader_majority: bool | None = None
    priority: int

    @model_validator(mode="after")
    def _validate_conditions(self) -> GuidanceRule:
        conditions = (
            self.min_gpa,
            self.min_cet,
            self.requires_extrovert_majority,
            self.requires_leader_majority,
        )
        if all(c is None for c in conditions):
            raise ValueError(f"rule '{self.id}' has no condition")
        return self


class GuidanceRuleSet(BaseModel):
    model_config = _frozen_config()

    rules: list[GuidanceRule]
    fallback: JobLabel = JobLabel.OTHER

    @model_validator(mode="after")
    def _validate_priorities(self) -> GuidanceRuleSet:
        priorities = [rule.priority for rule in self.rules]
        if len(priorities) != len(set(priorities)):
            raise ValueError("rule priorities must be unique")
        ids = [rule.id for rule in self.rules]
        if len(ids) != len(set(ids)):
            raise ValueError("rule ids must be unique")
        return self

    def ordered(self) -> list[GuidanceRule]:
        return sorted(self.rules, key=lambda rule: rule.priority)


class RadarVector(BaseModel):
    model_config = _frozen_config()

    cet_norm: float = Field(ge=0, le=1)
    gpa_norm: float = Field(ge=0, le=1)
    extrovert_fraction: float = Field(ge=0, le=1)
    leader_fraction: float = Field(ge=0, le=1)

    def axes(self) -> tuple[float, float, float, float]:
        return (self.cet_norm, self.gpa_norm, self.extrovert_fraction, self.leader_fraction)


class Recommendation(BaseModel):
    model_config = _frozen_config()

    job: JobLabel
    rule_id: str | None = Field(
        default=None,
        description="Matched rule id; None when the fallback applied",
    )
    advisory: bool = False


class DuplicateAssignment(BaseModel):
    model_config = _frozen_config()

    job: JobLabel
    cluster_ids: list[int]


class ClusterJobMapping(BaseModel):
    model_config = _frozen_config()

    assignments: dict[int, Recommendation]
    duplicates: list[DuplicateAssignment] = Field(default_factory=list)

    def job_for(self, cluster_id: int) -> JobLabel:
        return self.assignments[cluster_id].job


class ClusterReportBlock(BaseModel):
    model_config = _frozen_config()

    profile: ClusterProfile
    radar: RadarVector
    recommendation: Recommendation
    reasons: list[str]
    suggestions: list[str]


class GuidanceReport(BaseModel):
    model_config = _frozen_config(ser_json_inf_nan="constants")

    clusters: list[ClusterReportBlock]
    duplicates: list[DuplicateAssignment] = Field(default_factory=list)
    metrics: MetricBundle | None = None


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

class RunConfig(BaseModel):
    model_config = _frozen_config()

    input_path: str | None = None
    synthetic: SyntheticSpec | None = None
    bounds: ValidationBounds = Field(default_factory=ValidationBounds)
    scaler_override: dict[str, tuple[float, float]] = Field(default_factory=dict)
    k: int | None = Field(default=None, ge=1)
    k_range: tuple[int, int] = (1, 8)
    init: InitMethod = InitMethod.PLUS_PLUS
    restarts: int = Field(default=10, ge=1)
    max_iter: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-9, ge=0)
    seed: int = Field(default=7, ge=0, lt=2**64)
    bins: int = Field(default=20, ge=1)
    rules_path: str | None = None
    output_dir: str = "./out"
    emit: list[Literal["json", "svg", "text"]] = Field(
        default_factory=lambda: ["json", "svg", "text"]
    )
    silhouette_space: Literal["feature", "pca"] = "feature"
    run_id: str | None = None

    @model_validator(mode="after")
    def _validate_sources(self) -> RunConfig:
        if (self.input_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of input_path / synthetic must be set")
        k_min, k_max = self.k_range
        if k_min < 1 or k_min > k_max:
            raise ValueError("k_range must satisfy 1 <= k_min <= k_max")
        for name, (lo, hi) in self.scaler_override.items():
            if name not in ("cet4", "gpa"):
                raise ValueError(f"scaler override names unknown feature '{name}'")
            if not hi > lo:
                raise ValueError(f"scaler override for {name} needs max > min")
        return self
