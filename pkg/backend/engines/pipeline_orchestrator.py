"""
Pipeline Orchestrator

Coordinates the multi-step flows behind each CLI subcommand:
- summarize: load → validate → summary JSON + histogram SVGs
- elbow: load → validate → preprocess → SSE curve + knee
- run: load → validate → preprocess → kmeans → pca → metrics → guidance → viz
- synth: synthetic cohort → CSV
- metrics: cohort + assignments file → metric bundle

Every stage runs inside a named context so any engine or IO failure
surfaces as a PipelineStageError carrying the stage name. Artifacts are
written under ``<output_dir>/<run_id>_*`` with sorted keys and no
timestamps so identical configs produce identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from backend.config.runtime import get_runtime_config
from backend.models.schemas import (
    ClusterJobMapping,
    CohortSummary,
    ElbowCurve,
    GuidanceReport,
    KMeansConfig,
    MetricBundle,
    Rejection,
    RunConfig,
    ScalerParams,
    StudentRecord,
)

from . import dataset, guidance, kmeans, metrics, pca, preprocess, viz
from .seeds import KMEANS_STAGE, SEED_SCHEME, SYNTHETIC_STAGE, derive_seed

logger = logging.getLogger(__name__)

ASSIGNMENTS_HEADER = ("serial", "cluster", "recommended_job")


class PipelineOrchestratorError(Exception):
    """Base exception for pipeline orchestration errors."""
    pass


class PipelineStageError(PipelineOrchestratorError):
    """Raised when a named pipeline stage fails; wraps the original error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


def hash_id(payload: str) -> str:
    """Generate a short deterministic ID from a serialized config."""
    return hashlib.sha256(payload.encode()).hexdigest()[:10]


@dataclass(frozen=True)
class CohortLoad:
    records: list[StudentRecord]
    rejections: list[Rejection]


@dataclass(frozen=True)
class ElbowOutcome:
    curve: ElbowCurve
    knee: int
    artifacts: list[Path] = field(default_factory=list)


@dataclass(frozen=True)
class RunOutcome:
    run_id: str
    k: int
    k_source: str
    clustering: kmeans.ClusteringResult
    mapping: ClusterJobMapping
    metrics: MetricBundle
    report: GuidanceReport
    artifacts: list[Path] = field(default_factory=list)


class PipelineOrchestrator:
    """Runs one pipeline invocation for a resolved RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.run_id = config.run_id or hash_id(
            config.model_dump_json(exclude={"run_id", "output_dir", "emit"})
        )
        self._written: list[Path] = []

    # ---------------------------------------------------------------------------
    # Stage + storage helpers
    # ---------------------------------------------------------------------------

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        """Run a block as pipeline stage ``name``, wrapping engine and IO errors."""
        logger.debug("Stage %s started (run %s)", name, self.run_id)
        try:
            yield
        except PipelineStageError:
            raise
        except (ValueError, OSError, TypeError, KeyError) as exc:
            raise PipelineStageError(name, exc) from exc

    def _emits(self, kind: str) -> bool:
        """Whether the run emits artifacts of ``kind`` (json, svg, text)."""
        return kind in self.config.emit

    def _artifact_path(self, suffix: str) -> Path:
        """Output path for an artifact of this run."""
        return self.output_dir / f"{self.run_id}_{suffix}"

    def _write_text(self, suffix: str, content: str) -> Path:
        """Write a text artifact with LF newlines and remember its path."""
        path = self._artifact_path(suffix)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        self._written.append(path)
        return path

    def _write_json(self, suffix: str, payload: Any) -> Path:
        """Write a JSON artifact with sorted keys."""
        return self._write_text(suffix, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def _take_written(self) -> list[Path]:
        """Return and reset the artifacts written since the last call."""
        written, self._written = self._written, []
        return written

    # ---------------------------------------------------------------------------
    # Shared stages
    # ---------------------------------------------------------------------------

    def load_cohort(self) -> CohortLoad:
        """Read or synthesize the cohort, then drop out-of-bounds records."""
        with self._stage("load"):
            if self.config.input_path is not None:
                records = read_cohort(self.config.input_path)
            else:
                assert self.config.synthetic is not None
                records = dataset.generate_synthetic(
                    self.config.synthetic, derive_seed(self.config.seed, SYNTHETIC_STAGE)
                )

        with self._stage("validate"):
            rejections = dataset.collect_rejections(records, self.config.bounds)
            accepted = dataset.validate_cohort(records, self.config.bounds)
            if not accepted:
                raise dataset.EmptyCohort("No records survived validation")
        return CohortLoad(records=accepted, rejections=rejections)

    def _preprocess(
        self, records: list[StudentRecord]
    ) -> tuple[ScalerParams, preprocess.FeatureMatrix]:
        """Fit the scaler (plus overrides) and build the feature matrix."""
        with self._stage("preprocess"):
            params = preprocess.fit_scaler(records)
            if self.config.scaler_override:
                params = params.with_overrides(self.config.scaler_override)
            return params, preprocess.build_matrix(records, params)

    def _kmeans_config(self, k: int) -> KMeansConfig:
        """K-means settings for ``k`` clusters on the kmeans seed stream."""
        return KMeansConfig(
            k=k,
            init=self.config.init,
            max_iter=self.config.max_iter,
            tol=self.config.tol,
            restarts=self.config.restarts,
            seed=derive_seed(self.config.seed, KMEANS_STAGE),
        )

    def _scan(self, matrix: preprocess.FeatureMatrix) -> ElbowOutcome:
        """Elbow scan over the configured k range, then knee detection."""
        k_min, k_max = self.config.k_range
        k_max = min(k_max, matrix.n_rows)
        with self._stage("elbow"):
            curve = kmeans.elbow_scan(matrix, k_min, k_max, self._kmeans_config(k_min))
        with self._stage("write"):
            self._write_text("elbow.csv", curve.to_csv())
        with self._stage("knee"):
            knee = kmeans.detect_knee(curve)
        with self._stage("write"):
            if self._emits("json"):
                self._write_json("elbow.json", {"curve": curve.model_dump(mode="json"), "knee": knee})
        logger.info("Elbow scan over k=%d..%d chose k=%d", k_min, k_max, knee)
        return ElbowOutcome(curve=curve, knee=knee, artifacts=self._take_written())

    # ---------------------------------------------------------------------------
    # Subcommands
    # ---------------------------------------------------------------------------

    def summarize(self) -> tuple[CohortSummary, list[Path]]:
        """Cohort summary JSON plus CET-4 and GPA histograms."""
        cohort = self.load_cohort()
        with self._stage("summarize"):
            summary = dataset.summarize(cohort.records, self.config.bins)

        with self._stage("write"):
            if self._emits("json"):
                self._write_json(
                    "summary.json",
                    {
                        "summary": summary.model_dump(mode="json"),
                        "rejections": [r.model_dump(mode="json") for r in cohort.rejections],
                    },
                )
            if self._emits("svg"):
                for feature, title in (("cet4", "CET-4 score distribution"), ("gpa", "GPA distribution")):
                    values = [float(getattr(r, feature)) for r in cohort.records]
                    self._write_text(
                        f"{feature}_hist.svg",
                        viz.render_histogram(values, self.config.bins, title),
                    )
        return summary, self._take_written()

    def elbow(self) -> ElbowOutcome:
        """SSE curve and knee for the configured k range."""
        cohort = self.load_cohort()
        _, matrix = self._preprocess(cohort.records)
        return self._scan(matrix)

    def run(self) -> RunOutcome:
        """Full pipeline: cluster, evaluate, recommend and chart."""
        runtime = get_runtime_config()
        cohort = self.load_cohort()
        records = cohort.records
        params, matrix = self._preprocess(records)

        elbow: ElbowOutcome | None = None
        if self.config.k is None:
            elbow = self._scan(matrix)
            k, k_source = elbow.knee, "knee"
        else:
            k, k_source = self.config.k, "config"

        with self._stage("kmeans"):
            clustering = kmeans.lloyd(matrix, self._kmeans_config(k))
            labels = [int(label) for label in clustering.labels]

        with self._stage("pca"):
            model = pca.fit(matrix)
            z = pca.project(matrix, model, 2)

        with self._stage("metrics"):
            truth = _truth_labels(records)
            space = self.config.silhouette_space
            bundle = metrics.evaluate(z if space == "pca" else matrix, labels, truth, space=space)

        with self._stage("guidance"):
            rules = (
                guidance.load_rules(self.config.rules_path)
                if self.config.rules_path
                else guidance.default_rules()
            )
            profiles = guidance.profile_clusters(records, labels, k)
            mapping = guidance.map_clusters_to_jobs(profiles, rules)
            report = guidance.render_report(profiles, mapping, bundle, params)

        with self._stage("viz"):
            scatter = None
            radars: list[tuple[int, str]] = []
            if self._emits("svg"):
                hulls = viz.cluster_hulls(z, labels)
                scatter = viz.render_scatter(
                    z, labels, hulls, explained_ratio=model.explained_variance_ratio[:2].tolist()
                )
                for block in report.clusters:
                    cid = block.profile.cluster_id
                    title = f"Cluster {cid}: {block.recommendation.job.value}"
                    radars.append((cid, viz.render_radar(block.radar, title)))

        with self._stage("write"):
            self._write_text("assignments.csv", _assignments_csv(records, labels, mapping))
            if self._emits("json"):
                self._write_text("metrics.json", bundle.model_dump_json(indent=2, exclude_none=True) + "\n")
                self._write_text("report.json", guidance.report_to_json(report))
                self._write_json(
                    "run.json",
                    self._run_metadata(
                        cohort, params, clustering, model, k, k_source,
                        runtime.guidance.majority_threshold,
                    ),
                )
            if self._emits("text"):
                self._write_text("report.txt", guidance.report_to_text(report))
            if scatter is not None:
                self._write_text("scatter.svg", scatter)
            for cid, svg in radars:
                self._write_text(f"radar_{cid}.svg", svg)

        artifacts = (elbow.artifacts if elbow else []) + self._take_written()
        logger.info("Run %s finished: k=%d, %d artifacts", self.run_id, k, len(artifacts))
        return RunOutcome(
            run_id=self.run_id,
            k=k,
            k_source=k_source,
            clustering=clustering,
            mapping=mapping,
            metrics=bundle,
            report=report,
            artifacts=artifacts,
        )

    def synth(self, blobs: bool = False) -> Path:
        """Write a synthetic cohort CSV; ``blobs`` swaps in the four-corner blob cohort."""
        with self._stage("synth"):
            seed = derive_seed(self.config.seed, SYNTHETIC_STAGE)
            if blobs:
                syn = get_runtime_config().synthetic
                records = dataset.blob_records(syn.blob_sigma, syn.blob_per_cluster, seed, self.config.bounds)
            else:
                assert self.config.synthetic is not None
                records = dataset.generate_synthetic(self.config.synthetic, seed)
        with self._stage("write"):
            path = self._write_text("cohort.csv", dataset.serialize_records(records))
        self._take_written()
        return path

    def recompute_metrics(self, assignments_path: str | Path) -> tuple[MetricBundle, Path | None]:
        """Metrics for a previously written assignments CSV against the current cohort."""
        cohort = self.load_cohort()
        _, matrix = self._preprocess(cohort.records)

        with self._stage("load"):
            by_serial = read_assignments(assignments_path)

        with self._stage("metrics"):
            missing = [r.serial for r in cohort.records if r.serial not in by_serial]
            if missing:
                raise ValueError(
                    f"Assignments file {assignments_path} has no cluster for serials {missing[:10]}"
                )
            labels = [by_serial[r.serial] for r in cohort.records]
            data = matrix
            if self.config.silhouette_space == "pca":
                model = pca.fit(matrix)
                data = pca.project(matrix, model, 2)
            bundle = metrics.evaluate(
                data, labels, _truth_labels(cohort.records), space=self.config.silhouette_space
            )

        path = None
        with self._stage("write"):
            if self._emits("json"):
                path = self._write_text("metrics.json", bundle.model_dump_json(indent=2, exclude_none=True) + "\n")
        self._take_written()
        return bundle, path

    # ---------------------------------------------------------------------------
    # Metadata
    # ---------------------------------------------------------------------------

    def _run_metadata(
        self,
        cohort: CohortLoad,
        params: ScalerParams,
        clustering: kmeans.ClusteringResult,
        model: pca.PcaModel,
        k: int,
        k_source: str,
        majority_threshold: float,
    ) -> dict[str, Any]:
        """Everything needed to reproduce the run: config, seeds, scaler, clustering, pca."""
        return {
            "run_id": self.run_id,
            "config": self.config.model_dump(mode="json", exclude={"output_dir"}),
            "seeds": {
                "scheme": SEED_SCHEME,
                "run_seed": self.config.seed,
                "synthetic_seed": derive_seed(self.config.seed, SYNTHETIC_STAGE),
                "kmeans_seed": derive_seed(self.config.seed, KMEANS_STAGE),
            },
            "cohort": {
                "accepted": len(cohort.records),
                "rejections": [r.model_dump(mode="json") for r in cohort.rejections],
            },
            "scaler": params.model_dump(mode="json", by_alias=True),
            "k": k,
            "k_source": k_source,
            "clustering": {
                key: value
                for key, value in clustering.to_dict().items()
                if key != "labels"
            },
            "pca": model.to_dict(),
            "guidance": {"majority_threshold": majority_threshold},
        }


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def _read_utf8(source: Path, kind: str) -> str:
    """Read a UTF-8 input file, naming the file in any IO or decode error."""
    try:
        return source.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise dataset.DatasetError(
            f"Cannot decode {kind} file {source} as UTF-8: {exc.reason} at byte {exc.start}"
        ) from exc
    except OSError as exc:
        raise OSError(f"Cannot read {kind} file {source}: {exc.strerror or exc}") from exc


def read_cohort(path: str | Path) -> list[StudentRecord]:
    """Load and parse a cohort CSV; dataset errors are prefixed with the path."""
    source = Path(path)
    text = _read_utf8(source, "cohort")
    try:
        return dataset.parse_records(text)
    except dataset.DatasetError as exc:
        raise _with_path(exc, source) from None


def _with_path(exc: dataset.DatasetError, source: Path) -> dataset.DatasetError:
    """Prefix an engine error message with the offending file."""
    exc.args = (f"{source}: {exc}",)
    return exc


def read_assignments(path: str | Path) -> dict[int, int]:
    """Read a ``serial,cluster[,recommended_job]`` file into a serial → cluster map."""
    source = Path(path)
    text = _read_utf8(source, "assignments")
    try:
        rows = dataset.read_table(text)
    except dataset.DatasetError as exc:
        raise _with_path(exc, source) from None

    if not rows or tuple(cell.strip() for cell in rows[0][1][:2]) != ASSIGNMENTS_HEADER[:2]:
        raise ValueError(f"{source}: expected a header starting with serial,cluster")

    by_serial: dict[int, int] = {}
    for line_no, row in rows[1:]:
        try:
            by_serial[int(row[0])] = int(row[1])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{source}: malformed assignment on line {line_no}") from exc
    return by_serial


def _assignments_csv(
    records: list[StudentRecord], labels: list[int], mapping: ClusterJobMapping
) -> str:
    """Render the per-student assignment table."""
    return dataset.write_table(
        ASSIGNMENTS_HEADER,
        (
            (record.serial, label, mapping.job_for(label).value)
            for record, label in zip(records, labels)
        ),
    )


def _truth_labels(records: list[StudentRecord]) -> list[str] | None:
    """Job labels for external metrics, or None when any record is unlabelled."""
    if any(record.job is None for record in records):
        return None
    return [record.job.value for record in records]  # type: ignore[union-attr]
