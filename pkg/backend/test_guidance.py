from __future__ import annotations

import json
import math
import tempfile
import unittest
from pathlib import Path

import hypothesis.strategies as st
import numpy as np
from hypothesis import given, settings

from backend.engines.dataset import parse_records
from backend.engines.guidance import (
    EmptyCluster,
    GuidanceError,
    default_rules,
    dump_rules,
    load_rules,
    map_clusters_to_jobs,
    profile_clusters,
    radar_vector,
    recommend,
    recommend_record,
    render_report,
    report_to_json,
    report_to_text,
    rule_matches,
)
from backend.engines.preprocess import fit_scaler
from backend.models.schemas import (
    ClusterProfile,
    FeatureRange,
    GuidanceRule,
    GuidanceRuleSet,
    JobLabel,
    MetricBundle,
    Personality,
    ScalerParams,
    StudentRecord,
)

FIXTURE = Path(__file__).resolve().parent / "fixtures" / "sample_cohort.csv"
SAMPLE_PARAMS = ScalerParams(cet4=FeatureRange(min=324, max=548), gpa=FeatureRange(min=2.30, max=4.70))


def _profile(
    cluster_id: int, gpa: float, cet: float, extrovert: float, leader: float, size: int = 10
) -> ClusterProfile:
    return ClusterProfile(
        cluster_id=cluster_id,
        size=size,
        mean_cet4=cet,
        mean_gpa=gpa,
        extrovert_fraction=extrovert,
        leader_fraction=leader,
    )


# One profile per cluster archetype, in the order technical, management, product, sales.
ARCHETYPES = [
    _profile(0, gpa=3.9, cet=480, extrovert=0.2, leader=0.1),
    _profile(1, gpa=3.6, cet=470, extrovert=0.9, leader=0.8),
    _profile(2, gpa=3.6, cet=420, extrovert=0.8, leader=0.7),
    _profile(3, gpa=3.0, cet=430, extrovert=0.9, leader=0.3),
]


class ProfileTests(unittest.TestCase):
    def setUp(self) -> None:
        self.records = parse_records(FIXTURE.read_text(encoding="utf-8"))

    def test_rows_four_and_six(self) -> None:
        pair = [r for r in self.records if r.serial in (4, 6)]
        (profile,) = profile_clusters(pair, [0, 0], 1)
        self.assertEqual(profile.mean_cet4, 502.0)
        self.assertAlmostEqual(profile.mean_gpa, 4.205, places=12)
        self.assertEqual((profile.extrovert_fraction, profile.leader_fraction), (0.0, 0.0))
        self.assertEqual(profile.dominant_job, JobLabel.TECHNICAL)

    def test_singleton_cluster(self) -> None:
        record = self.records[0]
        (profile,) = profile_clusters([record], [0], 1)
        self.assertEqual((profile.mean_cet4, profile.mean_gpa), (409.0, 4.51))
        self.assertEqual((profile.extrovert_fraction, profile.leader_fraction), (1.0, 1.0))

    def test_all_extrovert(self) -> None:
        extroverts = [r for r in self.records if r.personality is Personality.EXTROVERT][:5]
        (profile,) = profile_clusters(extroverts, [0] * 5, 1)
        self.assertEqual(profile.extrovert_fraction, 1.0)

    def test_dominant_job_tie_follows_label_order(self) -> None:
        pair = [r for r in self.records if r.serial in (1, 3)]  # sales, management
        (profile,) = profile_clusters(pair, [0, 0], 1)
        self.assertEqual(profile.dominant_job, JobLabel.SALES)

    def test_empty_cluster(self) -> None:
        with self.assertRaises(EmptyCluster) as ctx:
            profile_clusters(self.records[:2], [0, 0], 2)
        self.assertEqual(ctx.exception.cluster_id, 1)

    def test_label_errors(self) -> None:
        with self.assertRaises(GuidanceError):
            profile_clusters(self.records[:2], [0], 1)
        with self.assertRaises(GuidanceError):
            profile_clusters(self.records[:2], [0, 3], 2)

    @given(st.integers(1, 5), st.integers(0, 40), st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_means_match_brute_force_averaging(self, k: int, extra: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        n = k + extra
        records = [
            StudentRecord(
                serial=i + 1,
                cet4=int(rng.integers(300, 711)),
                gpa=round(float(rng.uniform(0.0, 5.0)), 2),
                personality=Personality.EXTROVERT if rng.random() < 0.5 else Personality.INTROVERT,
                student_leader=bool(rng.random() < 0.3),
            )
            for i in range(n)
        ]
        labels = rng.permutation([i % k for i in range(n)]).tolist()
        for profile in profile_clusters(records, labels, k):
            members = [r for r, label in zip(records, labels) if label == profile.cluster_id]
            self.assertEqual(profile.size, len(members))
            self.assertAlmostEqual(
                profile.mean_cet4, math.fsum(r.cet4 for r in members) / len(members), delta=1e-12 * 710
            )
            self.assertAlmostEqual(
                profile.mean_gpa, math.fsum(r.gpa for r in members) / len(members), delta=1e-12 * 5
            )
            extroverts = sum(1 for r in members if r.personality is Personality.EXTROVERT)
            self.assertEqual(profile.extrovert_fraction, extroverts / len(members))
            self.assertIsNone(profile.dominant_job)


class RadarVectorTests(unittest.TestCase):
    def test_minima_and_maxima(self) -> None:
        low = radar_vector(_profile(0, 2.30, 324, 0.0, 0.0), SAMPLE_PARAMS)
        high = radar_vector(_profile(0, 4.70, 548, 1.0, 1.0), SAMPLE_PARAMS)
        self.assertEqual(low.axes(), (0.0, 0.0, 0.0, 0.0))
        self.assertEqual(high.axes(), (1.0, 1.0, 1.0, 1.0))

    def test_midpoint(self) -> None:
        self.assertEqual(radar_vector(_profile(0, 3.5, 436, 0.5, 0.5), SAMPLE_PARAMS).cet_norm, 0.5)


class RuleTests(unittest.TestCase):
    def setUp(self) -> None:
        self.rules = default_rules()

    def test_default_rule_set(self) -> None:
        ordered = self.rules.ordered()
        self.assertEqual(
            [r.job for r in ordered],
            [JobLabel.TECHNICAL, JobLabel.MANAGEMENT, JobLabel.PRODUCT, JobLabel.SALES],
        )
        self.assertEqual(self.rules.fallback, JobLabel.OTHER)
        thresholds = [(r.min_gpa, r.min_cet) for r in ordered]
        self.assertEqual(thresholds, [(3.7, 460), (3.5, 450), (3.5, 400), (None, 400)])
        self.assertTrue(ordered[3].requires_extrovert_majority)

    def test_archetypes_map_to_their_jobs(self) -> None:
        jobs = [recommend(p, self.rules).job for p in ARCHETYPES]
        self.assertEqual(
            jobs, [JobLabel.TECHNICAL, JobLabel.MANAGEMENT, JobLabel.PRODUCT, JobLabel.SALES]
        )
        self.assertEqual(recommend(ARCHETYPES[0], self.rules).rule_id, "technical")

    def test_technical_and_sales_archetypes_match_a_single_rule(self) -> None:
        for profile in (ARCHETYPES[0], ARCHETYPES[3]):
            matches = [r.id for r in self.rules.rules if rule_matches(r, profile)]
            self.assertEqual(len(matches), 1)

    def test_out_of_range_profile_falls_back(self) -> None:
        rec = recommend(_profile(0, 2.8, 350, 0.4, 0.2), self.rules)
        self.assertEqual((rec.job, rec.rule_id), (JobLabel.OTHER, None))

    def test_thresholds_are_strict(self) -> None:
        self.assertEqual(recommend(_profile(0, 3.7, 480, 0.1, 0.1), self.rules).job, JobLabel.OTHER)
        self.assertEqual(recommend(_profile(0, 3.0, 400, 0.9, 0.1), self.rules).job, JobLabel.OTHER)
        self.assertEqual(recommend(_profile(0, 3.0, 430, 0.5, 0.1), self.rules).job, JobLabel.OTHER)

    def test_lower_priority_rule_keeps_outcomes(self) -> None:
        extended = GuidanceRuleSet(
            rules=self.rules.rules
            + [GuidanceRule(id="catch_all", job=JobLabel.PRODUCT, min_cet=0, priority=99)]
        )
        for profile in ARCHETYPES:
            self.assertEqual(recommend(profile, extended), recommend(profile, self.rules))

    @given(
        st.integers(0, 1000),
        st.integers(0, 1000),
        st.integers(1, 1000),
        st.sampled_from(["min_gpa", "min_cet"]),
    )
    @settings(max_examples=300, deadline=None)
    def test_scaling_threshold_and_value_together_keeps_the_outcome(
        self, threshold: int, value: int, factor: int, condition: str
    ) -> None:
        def outcome(scale: int) -> bool:
            rule = GuidanceRule(
                id="r", job=JobLabel.TECHNICAL, priority=1, **{condition: float(threshold * scale)}
            )
            mean = float(value * scale)
            profile = _profile(0, gpa=mean, cet=mean, extrovert=0.5, leader=0.5)
            return rule_matches(rule, profile)

        self.assertEqual(outcome(factor), outcome(1))
        self.assertEqual(outcome(1), value > threshold)

    def test_rule_validation(self) -> None:
        with self.assertRaises(ValueError):
            GuidanceRule(id="empty", job=JobLabel.SALES, priority=1)
        with self.assertRaises(ValueError):
            GuidanceRuleSet(
                rules=[
                    GuidanceRule(id="a", job=JobLabel.SALES, min_cet=1, priority=1),
                    GuidanceRule(id="b", job=JobLabel.PRODUCT, min_cet=1, priority=1),
                ]
            )

    def test_dump_and_load(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rules.json"
            path.write_text(dump_rules(self.rules), encoding="utf-8")
            self.assertEqual(load_rules(path), self.rules)

    def test_per_record_advice_is_advisory(self) -> None:
        record = StudentRecord(
            serial=1, cet4=500, gpa=3.9, personality=Personality.INTROVERT, student_leader=False
        )
        rec = recommend_record(record, self.rules)
        self.assertEqual(rec.job, JobLabel.TECHNICAL)
        self.assertTrue(rec.advisory)


class MappingTests(unittest.TestCase):
    def test_distinct_jobs(self) -> None:
        mapping = map_clusters_to_jobs(ARCHETYPES, default_rules())
        self.assertEqual(len({rec.job for rec in mapping.assignments.values()}), 4)
        self.assertEqual(mapping.duplicates, [])
        self.assertEqual(mapping.job_for(2), JobLabel.PRODUCT)

    def test_duplicate_assignment_is_reported(self) -> None:
        twins = [_profile(0, 3.9, 480, 0.2, 0.1), _profile(1, 3.95, 500, 0.1, 0.0)]
        with self.assertLogs("backend.engines.guidance", level="WARNING"):
            mapping = map_clusters_to_jobs(twins, default_rules())
        self.assertEqual([rec.job for rec in mapping.assignments.values()], [JobLabel.TECHNICAL] * 2)
        (dup,) = mapping.duplicates
        self.assertEqual((dup.job, dup.cluster_ids), (JobLabel.TECHNICAL, [0, 1]))

    def test_all_fallback(self) -> None:
        weak = [_profile(i, 2.5, 350, 0.3, 0.1) for i in range(3)]
        mapping = map_clusters_to_jobs(weak, default_rules())
        self.assertTrue(all(rec.job is JobLabel.OTHER for rec in mapping.assignments.values()))
        self.assertEqual(mapping.duplicates[0].cluster_ids, [0, 1, 2])

    def test_no_profiles(self) -> None:
        with self.assertRaises(GuidanceError):
            map_clusters_to_jobs([], default_rules())


class ReportTests(unittest.TestCase):
    def setUp(self) -> None:
        self.mapping = map_clusters_to_jobs(ARCHETYPES, default_rules())

    def test_four_blocks_in_cluster_order(self) -> None:
        report = render_report(list(reversed(ARCHETYPES)), self.mapping, None, SAMPLE_PARAMS)
        self.assertEqual([b.profile.cluster_id for b in report.clusters], [0, 1, 2, 3])
        self.assertTrue(all(b.reasons and b.suggestions for b in report.clusters))
        self.assertEqual(report.clusters[0].recommendation.job, JobLabel.TECHNICAL)

    def test_empty_metrics_are_omitted(self) -> None:
        report = render_report(ARCHETYPES, self.mapping, MetricBundle(), SAMPLE_PARAMS)
        self.assertIsNone(report.metrics)
        self.assertNotIn("metrics", json.loads(report_to_json(report)))
        self.assertNotIn("Metrics:", report_to_text(report))

    def test_metrics_section(self) -> None:
        bundle = MetricBundle(silhouette_mean=0.684, calinski_harabasz=float("inf"), per_cluster={0: 0.7})
        report = render_report(ARCHETYPES, self.mapping, bundle, SAMPLE_PARAMS)
        text = report_to_text(report)
        self.assertIn("Silhouette (mean, feature space): 0.6840", text)
        self.assertIn("Calinski-Harabasz: inf", text)
        self.assertIn("silhouette_mean", report_to_json(report))

    def test_rendering_is_deterministic(self) -> None:
        first = render_report(ARCHETYPES, self.mapping, None, SAMPLE_PARAMS)
        second = render_report(ARCHETYPES, self.mapping, None, SAMPLE_PARAMS)
        self.assertEqual(report_to_json(first), report_to_json(second))
        self.assertEqual(report_to_text(first), report_to_text(second))

    def test_fixture_profiles_render(self) -> None:
        records = parse_records(FIXTURE.read_text(encoding="utf-8"))
        labels = [i % 4 for i in range(len(records))]
        profiles = profile_clusters(records, labels, 4)
        mapping = map_clusters_to_jobs(profiles, default_rules())
        report = render_report(profiles, mapping, None, fit_scaler(records))
        self.assertEqual(len(report.clusters), 4)
        self.assertIn("CAREER GUIDANCE REPORT", report_to_text(report))


if __name__ == "__main__":
    unittest.main()
