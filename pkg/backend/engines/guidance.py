"""
Career Guidance

Turns cluster assignments into raw-unit cluster profiles, radar vectors and
job recommendations using ordered threshold rules, then renders the
guidance report.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Sequence

import numpy as np

from backend.config.runtime import get_runtime_config
from backend.models.schemas import (
    JOB_ORDER,
    ClusterJobMapping,
    ClusterProfile,
    ClusterReportBlock,
    DuplicateAssignment,
    GuidanceReport,
    GuidanceRule,
    GuidanceRuleSet,
    JobLabel,
    MetricBundle,
    Personality,
    RadarVector,
    Recommendation,
    ScalerParams,
    StudentRecord,
)

from .preprocess import apply_scaler

logger = logging.getLogger(__name__)
_runtime_guidance = get_runtime_config().guidance


class GuidanceError(ValueError):
    """Base exception for guidance errors."""


class EmptyCluster(GuidanceError):
    def __init__(self, cluster_id: int) -> None:
        self.cluster_id = cluster_id
        super().__init__(f"Cluster {cluster_id} has no members")


# Static rationale per job: (reasons, development suggestions).
JOB_RATIONALE: dict[JobLabel, tuple[list[str], list[str]]] = {
    JobLabel.TECHNICAL: (
        [
            "Strong grades and language scores point to steady self-driven study.",
            "An introverted, non-leader profile suits long stretches of focused problem solving.",
            "The academic base supports moving deeper into software, data or engineering work.",
        ],
        [
            "Take advanced technical training and earn a recognised certification.",
            "Join a research or development project to build hands-on experience.",
            "Review progress regularly and adjust study methods.",
        ],
    ),
    JobLabel.MANAGEMENT: (
        [
            "Balanced strength across grades, language, sociability and leadership.",
            "Student-leader experience shows early team and organisational skills.",
            "Good communication backs clear decisions in a coordinating role.",
        ],
        [
            "Attend leadership courses or a management internship.",
            "Lead team projects to practise coordination and delegation.",
            "Build confidence through visible responsibility.",
        ],
    ),
    JobLabel.PRODUCT: (
        [
            "Solid grades combined with an outgoing, collaborative style.",
            "Communication strengths help in gathering and interpreting user needs.",
            "Organising experience fits cross-team coordination of product work.",
        ],
        [
            "Take part in design or innovation workshops.",
            "Combine technical and market knowledge through cross-disciplinary courses.",
            "Gain product or market-analysis experience through internships.",
        ],
    ),
    JobLabel.SALES: (
        [
            "Language ability and an outgoing personality stand out over grades.",
            "Sociable students tend to build client relationships quickly.",
            "Verbal skills form the base for negotiation and persuasion.",
        ],
        [
            "Practise public speaking and presentation.",
            "Study customer relationship management.",
            "Accumulate experience through sales internships or projects.",
        ],
    ),
    JobLabel.OTHER: (
        [
            "The profile does not meet any rule threshold.",
        ],
        [
            "Arrange individual counselling to explore interests outside the four main tracks.",
        ],
    ),
}


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def profile_clusters(
    records: Sequence[StudentRecord], labels: Sequence[int], k: int
) -> list[ClusterProfile]:
    labels_arr = np.asarray(labels, dtype=int)
    if labels_arr.shape[0] != len(records):
        raise GuidanceError(f"{labels_arr.shape[0]} labels for {len(records)} records")
    if labels_arr.size and (labels_arr.min() < 0 or labels_arr.max() >= k):
        raise GuidanceError(f"Labels must lie in [0, {k})")

    profiles: list[ClusterProfile] = []
    for cluster_id in range(k):
        members = [r for r, label in zip(records, labels_arr) if label == cluster_id]
        if not members:
            raise EmptyCluster(cluster_id)
        size = len(members)
        profiles.append(
            ClusterProfile(
                cluster_id=cluster_id,
                size=size,
                mean_cet4=sum(r.cet4 for r in members) / size,
                mean_gpa=sum(r.gpa for r in members) / size,
                extrovert_fraction=sum(r.personality is Personality.EXTROVERT for r in members) / size,
                leader_fraction=sum(r.student_leader for r in members) / size,
                dominant_job=_dominant_job(members),
            )
        )
    return profiles


def _dominant_job(members: Sequence[StudentRecord]) -> JobLabel | None:
    counts = Counter(r.job for r in members if r.job is not None)
    if not counts:
        return None
    top = max(counts.values())
    return next(job for job in JOB_ORDER if counts.get(job) == top)


def radar_vector(profile: ClusterProfile, params: ScalerParams) -> RadarVector:
    return RadarVector(
        cet_norm=apply_scaler(params, profile.mean_cet4, "cet4"),
        gpa_norm=apply_scaler(params, profile.mean_gpa, "gpa"),
        extrovert_fraction=profile.extrovert_fraction,
        leader_fraction=profile.leader_fraction,
    )


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

def default_rules() -> GuidanceRuleSet:
    return GuidanceRuleSet(
        rules=[
            GuidanceRule(
                id="technical",
                job=JobLabel.TECHNICAL,
                min_gpa=3.7,
                min_cet=460,
                requires_extrovert_majority=False,
                requires_leader_majority=False,
                priority=1,
            ),
            GuidanceRule(
                id="management",
                job=JobLabel.MANAGEMENT,
                min_gpa=3.5,
                min_cet=450,
                requires_extrovert_majority=True,
                requires_leader_majority=True,
                priority=2,
            ),
            GuidanceRule(
                id="product",
                job=JobLabel.PRODUCT,
                min_gpa=3.5,
                min_cet=400,
                requires_extrovert_majority=True,
                requires_leader_majority=True,
                priority=3,
            ),
            GuidanceRule(
                id="sales",
                job=JobLabel.SALES,
                min_cet=400,
                requires_extrovert_majority=True,
                priority=4,
            ),
        ],
        fallback=JobLabel.OTHER,
    )


def load_rules(path: str | Path) -> GuidanceRuleSet:
    return GuidanceRuleSet.model_validate_json(Path(path).read_text(encoding="utf-8"))


def dump_rules(rules: GuidanceRuleSet) -> str:
    return json.dumps(rules.model_dump(mode="json"), indent=2, sort_keys=True)


def _majority_holds(fraction: float, required: bool, threshold: float) -> bool:
    return fraction > threshold if required else fraction < threshold


def rule_matches(rule: GuidanceRule, profile: ClusterProfile) -> bool:
    threshold = _runtime_guidance.majority_threshold
    if rule.min_gpa is not None and not profile.mean_gpa > rule.min_gpa:
        return False
    if rule.min_cet is not None and not profile.mean_cet4 > rule.min_cet:
        return False
    if rule.requires_extrovert_majority is not None and not _majority_holds(
        profile.extrovert_fraction, rule.requires_extrovert_majority, threshold
    ):
        return False
    if rule.requires_leader_majority is not None and not _majority_holds(
        profile.leader_fraction, rule.requires_leader_majority, threshold
    ):
        return False
    return True


def recommend(profile: ClusterProfile, rules: GuidanceRuleSet) -> Recommendation:
    """First rule by priority whose every present condition holds."""
    for rule in rules.ordered():
        if rule_matches(rule, profile):
            return Recommendation(job=rule.job, rule_id=rule.id)
    return Recommendation(job=rules.fallback, rule_id=None)


def recommend_record(record: StudentRecord, rules: GuidanceRuleSet) -> Recommendation:
    """
    Per-student advisory mode: the record is evaluated as a singleton profile.

    The rules describe clusters, so a per-record result is only indicative.
    """
    profile = profile_clusters([record], [0], 1)[0]
    result = recommend(profile, rules)
    return result.model_copy(update={"advisory": True})


def map_clusters_to_jobs(
    profiles: Sequence[ClusterProfile], rules: GuidanceRuleSet
) -> ClusterJobMapping:
    if not profiles:
        raise GuidanceError("No cluster profiles to map")

    assignments = {profile.cluster_id: recommend(profile, rules) for profile in profiles}

    by_job: dict[JobLabel, list[int]] = {}
    for cluster_id, rec in assignments.items():
        by_job.setdefault(rec.job, []).append(cluster_id)

    duplicates: list[DuplicateAssignment] = []
    for job in JOB_ORDER:
        clusters = sorted(by_job.get(job, []))
        if len(clusters) > 1:
            logger.warning(
                "DuplicateAssignment: clusters %s all map to %s",
                clusters,
                job.value,
            )
            duplicates.append(DuplicateAssignment(job=job, cluster_ids=clusters))

    return ClusterJobMapping(assignments=assignments, duplicates=duplicates)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def render_report(
    profiles: Sequence[ClusterProfile],
    mapping: ClusterJobMapping,
    metrics_bundle: MetricBundle | None,
    params: ScalerParams,
) -> GuidanceReport:
    blocks: list[ClusterReportBlock] = []
    for profile in sorted(profiles, key=lambda p: p.cluster_id):
        rec = mapping.assignments[profile.cluster_id]
        reasons, suggestions = JOB_RATIONALE[rec.job]
        blocks.append(
            ClusterReportBlock(
                profile=profile,
                radar=radar_vector(profile, params),
                recommendation=rec,
                reasons=list(reasons),
                suggestions=list(suggestions),
            )
        )

    metrics = None if metrics_bundle is None or metrics_bundle.is_empty() else metrics_bundle
    return GuidanceReport(clusters=blocks, duplicates=list(mapping.duplicates), metrics=metrics)


def report_to_json(report: GuidanceReport) -> str:
    payload = report.model_dump(mode="json", exclude_none=True)
    if report.metrics is None:
        payload.pop("metrics", None)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_to_text(report: GuidanceReport) -> str:
    lines: list[str] = []
    lines.append("=" * 70)
    lines.append("CAREER GUIDANCE REPORT")
    lines.append("=" * 70)

    for block in report.clusters:
        p = block.profile
        rec = block.recommendation
        lines.append("")
        lines.append(f"Cluster {p.cluster_id} ({p.size} students)")
        lines.append("-" * 70)
        lines.append(f"  Mean CET-4: {p.mean_cet4:.2f}")
        lines.append(f"  Mean GPA: {p.mean_gpa:.3f}")
        lines.append(f"  Extrovert fraction: {p.extrovert_fraction:.3f}")
        lines.append(f"  Leader fraction: {p.leader_fraction:.3f}")
        if p.dominant_job is not None:
            lines.append(f"  Dominant observed job: {p.dominant_job.value}")
        radar = ", ".join(f"{v:.3f}" for v in block.radar.axes())
        lines.append(f"  Radar [CET, GPA, Extrovert, Leader]: {radar}")
        matched = rec.rule_id or "fallback"
        lines.append(f"  Recommended position: {rec.job.value} (rule: {matched})")
        lines.append("  Reasons:")
        lines.extend(f"    - {reason}" for reason in block.reasons)
        lines.append("  Suggestions:")
        lines.extend(f"    - {item}" for item in block.suggestions)

    if report.duplicates:
        lines.append("")
        lines.append("Warnings:")
        for dup in report.duplicates:
            ids = ", ".join(str(c) for c in dup.cluster_ids)
            lines.append(f"  - clusters {ids} share the recommendation {dup.job.value}")

    if report.metrics is not None:
        lines.extend(["", "Metrics:"])
        lines.extend(f"  {line}" for line in _metric_lines(report.metrics))

    lines.append("=" * 70)
    return "\n".join(lines) + "\n"


def _metric_lines(bundle: MetricBundle) -> list[str]:
    lines: list[str] = []
    if bundle.silhouette_mean is not None:
        lines.append(f"Silhouette (mean, {bundle.space} space): {bundle.silhouette_mean:.4f}")
    if bundle.per_cluster:
        for cluster_id, value in sorted(bundle.per_cluster.items()):
            lines.append(f"  cluster {cluster_id}: {value:.4f}")
    if bundle.calinski_harabasz is not None:
        lines.append(f"Calinski-Harabasz: {bundle.calinski_harabasz:.4f}")
    if bundle.ari is not None:
        lines.append(f"Adjusted Rand Index: {bundle.ari:.4f}")
    if bundle.homogeneity is not None:
        lines.append(f"Homogeneity: {bundle.homogeneity:.4f}")
    return lines

