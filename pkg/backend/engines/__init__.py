"""Engine modules for cohort clustering and career guidance."""

from .dataset import DatasetError, parse_records, summarize, validate_cohort
from .guidance import GuidanceError, default_rules, map_clusters_to_jobs, render_report
from .kmeans import KMeansError, detect_knee, elbow_scan, lloyd
from .metrics import MetricsError, evaluate
from .pca import PcaError, fit, project
from .pipeline_orchestrator import (
    PipelineOrchestrator,
    PipelineOrchestratorError,
    PipelineStageError,
)
from .preprocess import PreprocessError, build_matrix, fit_scaler
from .viz import VizError, render_histogram, render_radar, render_scatter

__all__ = [
    "DatasetError",
    "parse_records",
    "validate_cohort",
    "summarize",
    "PreprocessError",
    "fit_scaler",
    "build_matrix",
    "KMeansError",
    "lloyd",
    "elbow_scan",
    "detect_knee",
    "PcaError",
    "fit",
    "project",
    "MetricsError",
    "evaluate",
    "GuidanceError",
    "default_rules",
    "map_clusters_to_jobs",
    "render_report",
    "VizError",
    "render_scatter",
    "render_radar",
    "render_histogram",
    "PipelineOrchestrator",
    "PipelineOrchestratorError",
    "PipelineStageError",
]
