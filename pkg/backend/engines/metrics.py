"""
Cluster Validity Metrics

Internal indices (silhouette, Calinski-Harabasz) over the clustering
feature space and external agreement with known labels (ARI, homogeneity).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Hashable, Literal, Sequence

import numpy as np

from backend.models.schemas import MetricBundle, SilhouetteReport

from .preprocess import MatrixLike, as_array

logger = logging.getLogger(__name__)


class MetricsError(ValueError):
    """Base exception for metric errors."""


class SingleCluster(MetricsError):
    pass


class BadClusterCount(MetricsError):
    pass


class LengthMismatch(MetricsError):
    pass


@dataclass(frozen=True)
class LabelPair:
    truth: tuple[Hashable, ...]
    predicted: tuple[Hashable, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "truth", tuple(self.truth))
        object.__setattr__(self, "predicted", tuple(self.predicted))
        if len(self.truth) != len(self.predicted):
            raise LengthMismatch(
                f"truth has {len(self.truth)} labels, predicted has {len(self.predicted)}"
            )
        if not self.truth:
            raise LengthMismatch("label sequences must be non-empty")


def _encode(labels: Sequence[Hashable]) -> tuple[np.ndarray, int]:
    index: dict[Hashable, int] = {}
    codes = np.array([index.setdefault(label, len(index)) for label in labels], dtype=int)
    return codes, len(index)


def _check_labels(points: np.ndarray, labels: Sequence[Hashable]) -> None:
    if len(labels) != points.shape[0]:
        raise LengthMismatch(f"{len(labels)} labels for {points.shape[0]} rows")


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    dist = np.empty((n, n), dtype=float)
    for i in range(n):
        diff = points - points[i]
        dist[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return dist


# ---------------------------------------------------------------------------
# Internal indices
# ---------------------------------------------------------------------------

def silhouette(matrix: MatrixLike, labels: Sequence[int]) -> SilhouetteReport:
    points = as_array(matrix)
    _check_labels(points, labels)
    codes, k = _encode(list(labels))
    if k < 2:
        raise SingleCluster("Silhouette needs at least two clusters")

    dist = _pairwise_distances(points)
    n = points.shape[0]
    sizes = np.bincount(codes, minlength=k)
    # sums[i, c] = total distance from point i to members of cluster c
    sums = np.zeros((n, k), dtype=float)
    for c in range(k):
        sums[:, c] = dist[:, codes == c].sum(axis=1)

    scores = np.zeros(n, dtype=float)
    for i in range(n):
        own = codes[i]
        if sizes[own] == 1:
            continue
        a = sums[i, own] / (sizes[own] - 1)
        b = min(sums[i, c] / sizes[c] for c in range(k) if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom

    originals = list(dict.fromkeys(labels))
    per_cluster = {
        int(originals[c]): float(scores[codes == c].mean()) for c in range(k)
    }
    return SilhouetteReport(
        per_point=scores.tolist(),
        per_cluster_mean=dict(sorted(per_cluster.items())),
        overall_mean=float(scores.mean()),
    )


def calinski_harabasz(matrix: MatrixLike, labels: Sequence[int]) -> float:
    points = as_array(matrix)
    _check_labels(points, labels)
    codes, k = _encode(list(labels))
    n = points.shape[0]
    if not 2 <= k <= n - 1:
        raise BadClusterCount(f"Calinski-Harabasz needs 2 <= k <= n-1 (k={k}, n={n})")

    grand = points.mean(axis=0)
    between = 0.0
    within = 0.0
    for c in range(k):
        members = points[codes == c]
        centre = members.mean(axis=0)
        between += members.shape[0] * float(((centre - grand) ** 2).sum())
        within += float(((members - centre) ** 2).sum())

    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


# ---------------------------------------------------------------------------
# External indices
# ---------------------------------------------------------------------------

def _contingency(pair: LabelPair) -> np.ndarray:
    truth, n_truth = _encode(pair.truth)
    pred, n_pred = _encode(pair.predicted)
    table = np.zeros((n_truth, n_pred), dtype=np.int64)
    np.add.at(table, (truth, pred), 1)
    return table


def _comb2(values: np.ndarray) -> float:
    v = values.astype(float)
    return float((v * (v - 1.0) / 2.0).sum())


def adjusted_rand_index(pair: LabelPair) -> float:
    table = _contingency(pair)
    n = int(table.sum())
    index = _comb2(table)
    sum_rows = _comb2(table.sum(axis=1))
    sum_cols = _comb2(table.sum(axis=0))
    total_pairs = n * (n - 1) / 2.0
    expected = sum_rows * sum_cols / total_pairs if total_pairs else 0.0
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def _entropy(counts: np.ndarray) -> float:
    total = float(counts.sum())
    probs = counts[counts > 0] / total
    return float(-(probs * np.log(probs)).sum())


def homogeneity(pair: LabelPair) -> float:
    table = _contingency(pair)
    n = float(table.sum())
    h_truth = _entropy(table.sum(axis=1))
    if h_truth == 0.0:
        return 1.0

    cluster_sizes = table.sum(axis=0).astype(float)
    nz_truth, nz_pred = np.nonzero(table)
    joint = table[nz_truth, nz_pred].astype(float)
    h_conditional = float(-(joint / n * np.log(joint / cluster_sizes[nz_pred])).sum())
    return 1.0 - h_conditional / h_truth


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------

def evaluate(
    matrix: MatrixLike,
    labels: Sequence[int],
    truth: Sequence[Hashable] | None = None,
    space: Literal["feature", "pca"] = "feature",
) -> MetricBundle:
    """All applicable indices; internal ones are skipped when k is out of range."""
    points = as_array(matrix)
    labels = [int(label) for label in labels]
    k = len(set(labels))
    n = points.shape[0]

    silhouette_mean: float | None = None
    per_cluster: dict[int, float] | None = None
    ch: float | None = None
    if 2 <= k <= n - 1:
        report = silhouette(points, labels)
        silhouette_mean = report.overall_mean
        per_cluster = report.per_cluster_mean
        ch = calinski_harabasz(points, labels)
    else:
        logger.warning("Skipping internal metrics: k=%d is outside [2, n-1] for n=%d", k, n)

    ari: float | None = None
    homog: float | None = None
    if truth is not None:
        pair = LabelPair(truth=tuple(truth), predicted=tuple(labels))
        ari = adjusted_rand_index(pair)
        homog = homogeneity(pair)

    return MetricBundle(
        silhouette_mean=silhouette_mean,
        per_cluster=per_cluster,
        calinski_harabasz=ch,
        ari=ari,
        homogeneity=homog,
        space=space,
    )
