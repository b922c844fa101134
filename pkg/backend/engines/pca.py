"""
PCA

Population covariance, a cyclic Jacobi eigensolver for the small symmetric
covariance matrix, and projection of centred data onto the leading
components.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from backend.config.runtime import get_runtime_config

from .preprocess import MatrixLike, as_array

logger = logging.getLogger(__name__)
_runtime_pca = get_runtime_config().pca


class PcaError(ValueError):
    """Base exception for PCA errors."""


class TooFewRows(PcaError):
    pass


class NotSymmetric(PcaError):
    pass


class NoConvergence(PcaError):
    def __init__(self, sweeps: int) -> None:
        self.sweeps = sweeps
        super().__init__(f"Jacobi eigensolver did not converge after {sweeps} sweeps")


class ZeroVariance(PcaError):
    pass


class BadDimension(PcaError):
    pass


@dataclass(frozen=True)
class PcaModel:
    column_means: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    centered: bool = True

    @property
    def dimension(self) -> int:
        return int(self.components.shape[0])

    def to_dict(self) -> dict[str, object]:
        return {
            "column_means": self.column_means.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "centered": self.centered,
        }


def covariance(matrix: MatrixLike) -> np.ndarray:
    """Sigma = (1/n) * sum (x_i - mean)(x_i - mean)^T."""
    data = as_array(matrix)
    n = data.shape[0]
    if n < 2:
        raise TooFewRows(f"Covariance needs at least 2 rows, got {n}")
    centred = data - data.mean(axis=0)
    cov = centred.T @ centred / n
    return (cov + cov.T) / 2.0


def _scale_of(s: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(s)))


def _off_diagonal_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt((off * off).sum()))


def eigen_sym(
    s: np.ndarray,
    *,
    tol: float | None = None,
    max_sweeps: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi rotations on a symmetric matrix.

    Returns (eigenvalues descending, eigenvectors as columns). Each
    eigenvector is signed so its largest-magnitude entry is positive.
    """
    a = np.array(s, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"Expected a square matrix, got shape {a.shape}")
    scale = _scale_of(a)
    if float(np.abs(a - a.T).max(initial=0.0)) > _runtime_pca.symmetry_tol * scale:
        raise NotSymmetric("Matrix is not symmetric within tolerance")

    tol = _runtime_pca.off_diagonal_tol if tol is None else tol
    max_sweeps = _runtime_pca.max_sweeps if max_sweeps is None else max_sweeps
    d = a.shape[0]
    v = np.eye(d)
    a = (a + a.T) / 2.0

    sweeps = 0
    while _off_diagonal_norm(a) >= tol * scale:
        if sweeps >= max_sweeps:
            raise NoConvergence(sweeps)
        sweeps += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                if a[p, q] == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                rot = np.eye(d)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = t * c
                rot[q, p] = -t * c
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot

    logger.debug("Jacobi converged after %d sweeps", sweeps)
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    for j in range(d):
        pivot = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[pivot, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return values, vectors


def fit(matrix: MatrixLike) -> PcaModel:
    data = as_array(matrix)
    cov = covariance(data)
    values, vectors = eigen_sym(cov)
    if float(values.min(initial=0.0)) < _runtime_pca.eigenvalue_floor:
        logger.warning("Covariance has a negative eigenvalue %.3g; clipping to 0", values.min())
    values = np.where(values < 0.0, 0.0, values)
    total = float(values.sum())
    if total <= 0.0:
        raise ZeroVariance("All eigenvalues are zero; nothing to project")
    return PcaModel(
        column_means=data.mean(axis=0),
        eigenvalues=values,
        components=vectors,
        explained_variance_ratio=values / total,
    )


def project(matrix: MatrixLike, model: PcaModel, q: int) -> np.ndarray:
    """Z = (X - means) @ W_q."""
    data = as_array(matrix)
    if not 1 <= q <= model.dimension:
        raise BadDimension(f"Target dimension q={q} must be within [1, {model.dimension}]")
    if data.shape[1] != model.dimension:
        raise BadDimension(
            f"Matrix has {data.shape[1]} columns but the model expects {model.dimension}"
        )
    return (data - model.column_means) @ model.components[:, :q]


def reconstruct(z: np.ndarray, model: PcaModel) -> np.ndarray:
    """Map projected rows back to feature space."""
    q = z.shape[1]
    return z @ model.components[:, :q].T + model.column_means
