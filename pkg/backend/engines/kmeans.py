"""
K-means

Lloyd iterations minimizing within-cluster SSE, random / k-means++
seeding, best-of-restarts selection, the elbow scan over k and knee
detection on the resulting curve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from backend.models.schemas import ElbowCurve, ElbowPoint, InitMethod, KMeansConfig

from .preprocess import MatrixLike, as_array
from .seeds import derive_seed, make_rng

logger = logging.getLogger(__name__)

# Relative slack for the per-iteration SSE monotonicity check.
SSE_MONOTONE_TOL = 1e-12


class KMeansError(ValueError):
    """Base exception for clustering errors."""


class TooFewPoints(KMeansError):
    """Raised when there are fewer points (or curve points) than required."""


class InvalidKRange(KMeansError):
    """Raised for an empty or non-positive k range."""


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse: float
    iterations: int
    converged: bool
    seed_used: int
    sse_trace: tuple[float, ...] = ()
    restart_index: int = 0

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def to_dict(self) -> dict[str, object]:
        return {
            "k": self.k,
            "labels": [int(label) for label in self.labels],
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "sse": float(self.sse),
            "iterations": self.iterations,
            "converged": self.converged,
            "seed_used": self.seed_used,
            "restart_index": self.restart_index,
        }


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def init_centroids(matrix: MatrixLike, cfg: KMeansConfig) -> np.ndarray:
    points = as_array(matrix)
    n = points.shape[0]
    if n < cfg.k:
        raise TooFewPoints(f"Need at least k={cfg.k} points, got {n}")

    rng = make_rng(cfg.seed)
    if cfg.init is InitMethod.RANDOM_POINTS:
        chosen = rng.choice(n, size=cfg.k, replace=False)
        return points[chosen].copy()

    chosen_idx = [int(rng.integers(n))]
    nearest = _squared_distances(points, points[chosen_idx]).min(axis=1)
    while len(chosen_idx) < cfg.k:
        total = float(nearest.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=nearest / total))
        else:
            # Every remaining point duplicates a chosen centroid.
            remaining = np.setdiff1d(np.arange(n), chosen_idx)
            idx = int(rng.choice(remaining))
        chosen_idx.append(idx)
        nearest = np.minimum(nearest, _squared_distances(points, points[[idx]])[:, 0])
    return points[chosen_idx].copy()


def assign(matrix: MatrixLike, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row by squared Euclidean distance, lowest index on ties."""
    cents = np.asarray(centroids, dtype=float)
    if cents.ndim != 2 or cents.shape[0] < 1:
        raise KMeansError("assign needs at least one centroid")
    return np.argmin(_squared_distances(as_array(matrix), cents), axis=1)


def update_centroids(
    matrix: MatrixLike,
    labels: np.ndarray,
    k: int,
    previous: np.ndarray | None = None,
) -> np.ndarray:
    """
    Cluster means; an empty cluster takes the row farthest from its previous
    centroid (or from the grand mean when no previous centroids are given).
    """
    points = as_array(matrix)
    labels = np.asarray(labels)
    d = points.shape[1]
    centroids = np.zeros((k, d), dtype=float)
    counts = np.bincount(labels, minlength=k)
    np.add.at(centroids, labels, points)

    grand_mean = points.mean(axis=0) if points.shape[0] else np.zeros(d)
    taken: set[int] = set()
    for j in range(k):
        if counts[j] > 0:
            centroids[j] /= counts[j]
            continue
        anchor = previous[j] if previous is not None else grand_mean
        dist = ((points - anchor) ** 2).sum(axis=1)
        for idx in np.argsort(-dist, kind="stable"):
            if int(idx) not in taken:
                taken.add(int(idx))
                centroids[j] = points[idx]
                logger.debug("Re-seeded empty cluster %d with row %d", j, int(idx))
                break
    return centroids


def sse(matrix: MatrixLike, labels: np.ndarray, centroids: np.ndarray) -> float:
    points = as_array(matrix)
    diff = points - np.asarray(centroids, dtype=float)[np.asarray(labels)]
    return float(np.einsum("ij,ij->", diff, diff))


# ---------------------------------------------------------------------------
# Lloyd iterations
# ---------------------------------------------------------------------------

def _lloyd_single(points: np.ndarray, cfg: KMeansConfig) -> ClusteringResult:
    centroids = init_centroids(points, cfg)
    trace: list[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iter + 1):
        labels = assign(points, centroids)
        updated = update_centroids(points, labels, cfg.k, previous=centroids)
        shift = float(((updated - centroids) ** 2).sum(axis=1).max())
        centroids = updated
        trace.append(sse(points, labels, centroids))
        if shift < cfg.tol:
            converged = True
            break

    labels = assign(points, centroids)
    final_sse = sse(points, labels, centroids)
    trace.append(final_sse)
    _check_monotone(trace, cfg.seed)

    return ClusteringResult(
        labels=labels,
        centroids=centroids,
        sse=final_sse,
        iterations=iterations,
        converged=converged,
        seed_used=cfg.seed,
        sse_trace=tuple(trace),
    )


def _check_monotone(trace: list[float], seed: int) -> None:
    for step, (before, after) in enumerate(zip(trace, trace[1:]), start=1):
        if after > before + SSE_MONOTONE_TOL * max(1.0, abs(before)):
            logger.warning(
                "SSE increased at iteration %d (seed %d): %.17g -> %.17g",
                step,
                seed,
                before,
                after,
            )


def lloyd(matrix: MatrixLike, cfg: KMeansConfig) -> ClusteringResult:
    """Best of ``cfg.restarts`` Lloyd runs by SSE, earliest restart on ties."""
    points = as_array(matrix)
    if points.shape[0] < cfg.k:
        raise TooFewPoints(f"Need at least k={cfg.k} points, got {points.shape[0]}")

    best: ClusteringResult | None = None
    for restart in range(cfg.restarts):
        run_cfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, restart), "restarts": 1})
        result = _lloyd_single(points, run_cfg)
        if best is None or result.sse < best.sse:
            best = ClusteringResult(
                labels=result.labels,
                centroids=result.centroids,
                sse=result.sse,
                iterations=result.iterations,
                converged=result.converged,
                seed_used=result.seed_used,
                sse_trace=result.sse_trace,
                restart_index=restart,
            )

    assert best is not None
    if not best.converged:
        logger.warning("K-means (k=%d) hit max_iter=%d without converging", cfg.k, cfg.max_iter)
    return best


# ---------------------------------------------------------------------------
# Choosing k
# ---------------------------------------------------------------------------

def elbow_scan(matrix: MatrixLike, k_min: int, k_max: int, cfg: KMeansConfig) -> ElbowCurve:
    points = as_array(matrix)
    if k_min < 1 or k_min > k_max:
        raise InvalidKRange(f"Invalid k range [{k_min}, {k_max}]")
    if k_max > points.shape[0]:
        raise TooFewPoints(f"k_max={k_max} exceeds the {points.shape[0]} available points")

    curve: list[ElbowPoint] = []
    warnings: list[str] = []
    for k in range(k_min, k_max + 1):
        result = lloyd(points, cfg.model_copy(update={"k": k}))
        if curve and result.sse > curve[-1].sse:
            message = f"SSE rose from k={curve[-1].k} ({curve[-1].sse:.6g}) to k={k} ({result.sse:.6g})"
            logger.warning("Elbow scan: %s; consider more restarts", message)
            warnings.append(message)
        curve.append(ElbowPoint(k=k, sse=result.sse))
    return ElbowCurve(points=curve, warnings=warnings)


def detect_knee(curve: ElbowCurve) -> int:
    """
    k with the largest signed distance below the first-to-last chord.

    Only points under the chord count as knee candidates. A curve lying on or
    above its chord everywhere (concave, or linear) has no knee below it and
    yields the first k of the scan. Ties go to the smaller k.
    """
    if len(curve.points) < 3:
        raise TooFewPoints("Knee detection needs at least 3 curve points")

    ks = np.array([p.k for p in curve.points], dtype=float)
    values = np.array([p.sse for p in curve.points], dtype=float)
    dx = ks[-1] - ks[0]
    dy = values[-1] - values[0]
    # Signed perpendicular distance, positive below the chord.
    distances = (dy * (ks - ks[0]) - dx * (values - values[0])) / np.hypot(dx, dy)

    best = float(distances.max())
    slack = 1e-12 * max(1.0, abs(best), float(np.abs(values).max()))
    for point, distance in zip(curve.points, distances):
        if distance >= best - slack:
            return point.k
    return curve.points[0].k
