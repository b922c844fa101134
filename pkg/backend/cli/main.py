"""
Command-line front end.

    python -m backend.cli summarize --input backend/fixtures/sample_cohort.csv
    python -m backend.cli elbow --input cohort.csv --k-range 1:8
    python -m backend.cli run --input cohort.csv --k 4 --seed 7 --out ./out
    python -m backend.cli synth --n 3000 --seed 7
    python -m backend.cli metrics --input cohort.csv --assignments out/<run_id>_assignments.csv

Without ``--input`` the cohort is synthesized from the runtime defaults
(``--n`` records). Values resolve in this order, later winning:
runtime.yaml < CAREER_* environment < ``--config`` JSON file < flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from backend.config.runtime import get_runtime_config
from backend.config.settings import get_settings
from backend.engines.dataset import default_synthetic_spec
from backend.engines.pipeline_orchestrator import (
    PipelineOrchestrator,
    PipelineOrchestratorError,
    PipelineStageError,
)
from backend.engines.preprocess import PreprocessError, parse_scaler_override
from backend.models.schemas import RunConfig

logger = logging.getLogger(__name__)

# Config-file keys that differ from RunConfig field names.
_CONFIG_ALIASES = {
    "input": "input_path",
    "out": "output_dir",
    "rules": "rules_path",
}


class ConfigError(PipelineOrchestratorError):
    """Raised when flags and config file do not resolve to a valid RunConfig."""
    pass


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="Cohort CSV (header: serial_number,cet4,gpa,personality,student_leader,job)")
    parser.add_argument("--out", help="Output directory for artifacts")
    parser.add_argument("--seed", type=int, help="Run seed; every random stage derives from it")
    parser.add_argument("--n", type=int, help="Synthetic cohort size when --input is absent")
    parser.add_argument("--config", help="JSON file mirroring the flags")
    parser.add_argument("--run-id", dest="run_id", help="Artifact prefix (default: config digest)")
    parser.add_argument("--emit", help="Comma-separated subset of json,svg,text")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")
    parser.add_argument(
        "--scaler-override",
        dest="scaler_override",
        help="Fixed scaling ranges, e.g. cet4=320:623,gpa=1.69:4.29",
    )


def _add_clustering(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k-range", dest="k_range", help="Elbow scan range MIN:MAX")
    parser.add_argument("--init", choices=["random", "plusplus"])
    parser.add_argument("--restarts", type=int)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m backend.cli",
        description="K-means career guidance over student cohorts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    summarize = sub.add_parser("summarize", help="Cohort statistics and histograms")
    _add_common(summarize)
    summarize.add_argument("--bins", type=int, help="Histogram bin count")

    elbow = sub.add_parser("elbow", help="SSE curve over k and the detected knee")
    _add_common(elbow)
    _add_clustering(elbow)

    run = sub.add_parser("run", help="Full pipeline: cluster, project, evaluate, recommend, draw")
    _add_common(run)
    _add_clustering(run)
    run.add_argument("--k", type=int, help="Cluster count (default: detected knee)")
    run.add_argument("--rules", help="Guidance rules JSON file")
    run.add_argument("--silhouette-space", dest="silhouette_space", choices=["feature", "pca"])

    synth = sub.add_parser("synth", help="Write a synthetic cohort CSV")
    _add_common(synth)
    synth.add_argument("--blobs", action="store_true", help="Four Gaussian blobs at the unit-square corners")

    metrics = sub.add_parser("metrics", help="Recompute metrics from an assignments file")
    _add_common(metrics)
    metrics.add_argument("--assignments", required=True, help="<run_id>_assignments.csv")
    metrics.add_argument("--silhouette-space", dest="silhouette_space", choices=["feature", "pca"])

    return parser


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def _parse_k_range(value: Any) -> tuple[int, int]:
    if isinstance(value, str):
        for sep in (":", ","):
            if sep in value:
                lo, hi = value.split(sep, 1)
                return int(lo), int(hi)
        raise ValueError(f"k range '{value}' must look like MIN:MAX")
    lo, hi = value
    return int(lo), int(hi)


def _parse_emit(value: Any) -> list[str]:
    items = value.split(",") if isinstance(value, str) else list(value)
    return [item.strip().lower() for item in items if item.strip()]


def _load_config_file(path: str) -> dict[str, Any]:
    source = Path(path)
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {source}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file {source} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {source} must hold a JSON object")
    return {_CONFIG_ALIASES.get(key.replace("-", "_"), key.replace("-", "_")): value for key, value in raw.items()}


def _defaults() -> dict[str, Any]:
    runtime = get_runtime_config()
    settings = get_settings()
    b = runtime.dataset.bounds
    km = runtime.kmeans
    return {
        "bounds": {"cet4_min": b.cet4_min, "cet4_max": b.cet4_max, "gpa_min": b.gpa_min, "gpa_max": b.gpa_max},
        "bins": runtime.dataset.histogram_bins,
        "init": km.init,
        "restarts": km.restarts,
        "max_iter": km.max_iter,
        "tol": km.tol,
        "k_range": tuple(km.k_range),
        "silhouette_space": runtime.metrics.silhouette_space,
        "emit": list(runtime.cli.emit),
        "output_dir": settings.output_dir,
        "seed": settings.default_seed,
    }


_FLAG_FIELDS = (
    "seed", "run_id", "emit", "scaler_override", "k_range", "init", "restarts",
    "max_iter", "tol", "bins", "k", "silhouette_space",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional config file and explicit flags into a RunConfig."""
    merged = _defaults()
    n_override = getattr(args, "n", None)
    if args.config:
        file_values = _load_config_file(args.config)
        file_n = file_values.pop("n", None)
        if n_override is None:
            n_override = file_n
        merged.update(file_values)

    if args.input is not None:
        merged["input_path"] = args.input
    if args.out is not None:
        merged["output_dir"] = args.out
    if getattr(args, "rules", None) is not None:
        merged["rules_path"] = args.rules
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value

    try:
        if "k_range" in merged:
            merged["k_range"] = _parse_k_range(merged["k_range"])
        if "emit" in merged:
            merged["emit"] = _parse_emit(merged["emit"])
        if isinstance(merged.get("scaler_override"), str):
            merged["scaler_override"] = parse_scaler_override(merged["scaler_override"])
    except (ValueError, TypeError, PreprocessError) as exc:
        raise ConfigError(str(exc)) from exc

    if args.command == "synth":
        merged.pop("input_path", None)
    if merged.get("input_path") is None and merged.get("synthetic") is None:
        merged["synthetic"] = default_synthetic_spec(n_override).model_dump(mode="json")
    elif merged.get("input_path") is not None:
        merged.pop("synthetic", None)

    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _print_artifacts(paths: Sequence[Path]) -> None:
    for path in paths:
        print(f"  wrote {path}")


def cmd_summarize(orchestrator: PipelineOrchestrator) -> None:
    summary, artifacts = orchestrator.summarize()
    print(f"Cohort: {summary.count} students")
    print(f"  CET-4 mean {summary.cet4.mean:.2f}, median {summary.cet4.median:.2f}, range {summary.cet4.min:g}-{summary.cet4.max:g}")
    print(f"  GPA   mean {summary.gpa.mean:.3f}, median {summary.gpa.median:.3f}, range {summary.gpa.min:g}-{summary.gpa.max:g}")
    _print_artifacts(artifacts)


def cmd_elbow(orchestrator: PipelineOrchestrator) -> None:
    outcome = orchestrator.elbow()
    for point in outcome.curve.points:
        print(f"  k={point.k:<2d} sse={point.sse:.6f}")
    for warning in outcome.curve.warnings:
        print(f"  warning: {warning}")
    print(f"Knee: k* = {outcome.knee}")
    _print_artifacts(outcome.artifacts)


def cmd_run(orchestrator: PipelineOrchestrator) -> None:
    outcome = orchestrator.run()
    print(f"Run {outcome.run_id}: k={outcome.k} ({outcome.k_source}), SSE={outcome.clustering.sse:.6f}")
    for block in outcome.report.clusters:
        p = block.profile
        print(f"  cluster {p.cluster_id}: {p.size} students -> {block.recommendation.job.value}")
    if outcome.metrics.silhouette_mean is not None:
        print(f"  silhouette={outcome.metrics.silhouette_mean:.4f}")
    _print_artifacts(outcome.artifacts)


def cmd_synth(orchestrator: PipelineOrchestrator, blobs: bool) -> None:
    path = orchestrator.synth(blobs=blobs)
    print(f"  wrote {path}")


def cmd_metrics(orchestrator: PipelineOrchestrator, assignments: str) -> None:
    bundle, path = orchestrator.recompute_metrics(assignments)
    print(bundle.model_dump_json(indent=2, exclude_none=True))
    if path is not None:
        _print_artifacts([path])


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    level = (args.log_level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 1

    orchestrator = PipelineOrchestrator(config)
    try:
        if args.command == "summarize":
            cmd_summarize(orchestrator)
        elif args.command == "elbow":
            cmd_elbow(orchestrator)
        elif args.command == "run":
            cmd_run(orchestrator)
        elif args.command == "synth":
            cmd_synth(orchestrator, args.blobs)
        else:
            cmd_metrics(orchestrator, args.assignments)
    except PipelineStageError as exc:
        logger.debug("Stage %s failed", exc.stage, exc_info=exc.cause)
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
