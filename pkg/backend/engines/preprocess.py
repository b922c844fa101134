"""
Preprocessing

Min-max scaling of the continuous features, 0/1 encoding of the binary
ones, and assembly of the n x 4 clustering matrix.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from backend.models.schemas import (
    FeatureRange,
    Personality,
    ScalerParams,
    StudentRecord,
)

logger = logging.getLogger(__name__)

FEATURE_COLUMNS: tuple[str, ...] = ("cet4_norm", "gpa_norm", "personality_enc", "leader_enc")
SCALED_FEATURES: tuple[str, ...] = ("cet4", "gpa")


class PreprocessError(ValueError):
    """Base exception for preprocessing errors."""


class DegenerateFeature(PreprocessError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"Feature '{name}' has a single distinct value; cannot min-max scale it")


@dataclass(frozen=True)
class FeatureMatrix:
    """Read-only clustering matrix with column and row metadata."""

    data: np.ndarray
    columns: tuple[str, ...] = FEATURE_COLUMNS
    row_serials: tuple[int, ...] = ()
    clamped: tuple[tuple[int, str], ...] = field(default=())

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise PreprocessError(f"Feature matrix must be 2-D, got shape {data.shape}")
        if len(self.columns) != data.shape[1]:
            raise PreprocessError("Column metadata does not match matrix width")
        if self.row_serials and len(self.row_serials) != data.shape[0]:
            raise PreprocessError("Row serials do not match matrix height")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(
        cls,
        values: np.ndarray | Sequence[Sequence[float]],
        columns: Sequence[str] | None = None,
        row_serials: Sequence[int] | None = None,
    ) -> FeatureMatrix:
        data = np.asarray(values, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        cols = tuple(columns) if columns is not None else tuple(
            f"x{i}" for i in range(data.shape[1] if data.ndim == 2 else 0)
        )
        return cls(
            data=data,
            columns=cols,
            row_serials=tuple(row_serials) if row_serials is not None else (),
        )

    @property
    def n_rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.data.shape[1])


MatrixLike = Union[FeatureMatrix, np.ndarray, Sequence[Sequence[float]]]


def as_array(matrix: MatrixLike) -> np.ndarray:
    """2-D float view of a FeatureMatrix or array-like input."""
    if isinstance(matrix, FeatureMatrix):
        return matrix.data
    data = np.asarray(matrix, dtype=float)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    if data.ndim != 2:
        raise PreprocessError(f"Expected a 2-D matrix, got shape {data.shape}")
    return data


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

def fit_scaler(records: Sequence[StudentRecord]) -> ScalerParams:
    """Observed per-feature minimum and maximum."""
    ranges: dict[str, FeatureRange] = {}
    for feature in SCALED_FEATURES:
        values = [float(getattr(record, feature)) for record in records]
        if len(values) < 2 or min(values) == max(values):
            raise DegenerateFeature(feature)
        ranges[feature] = FeatureRange(min=min(values), max=max(values))
    return ScalerParams(**ranges)


def _scale(params: ScalerParams, x: float, feature: str) -> tuple[float, bool]:
    bounds = params.range_for(feature)
    value = (float(x) - bounds.x_min) / bounds.span
    if value < 0.0:
        return 0.0, True
    if value > 1.0:
        return 1.0, True
    return value, False


def apply_scaler(params: ScalerParams, x: float, feature: str) -> float:
    """(x - x_min) / (x_max - x_min), clamped to [0, 1] with a warning."""
    value, clamped = _scale(params, x, feature)
    if clamped:
        logger.warning("Clamped %s=%s outside fitted range to %s", feature, x, value)
    return value


def inverse_scaler(params: ScalerParams, x_norm: float, feature: str) -> float:
    bounds = params.range_for(feature)
    return bounds.x_min + float(x_norm) * bounds.span


def dump_scaler(params: ScalerParams) -> str:
    return json.dumps(params.model_dump(by_alias=True), indent=2, sort_keys=True)


def load_scaler(path: str | Path) -> ScalerParams:
    return ScalerParams.model_validate_json(Path(path).read_text(encoding="utf-8"))


def parse_scaler_override(text: str) -> dict[str, tuple[float, float]]:
    """Parse ``cet4=320:623,gpa=1.69:4.29`` into {feature: (min, max)}."""
    overrides: dict[str, tuple[float, float]] = {}
    for chunk in filter(None, (part.strip() for part in text.split(","))):
        name, sep, span = chunk.partition("=")
        lo, colon, hi = span.partition(":")
        if not sep or not colon:
            raise PreprocessError(f"Bad scaler override '{chunk}', expected name=min:max")
        name = name.strip()
        if name not in SCALED_FEATURES:
            raise PreprocessError(f"Scaler override names unknown feature '{name}'")
        try:
            overrides[name] = (float(lo), float(hi))
        except ValueError as exc:
            raise PreprocessError(f"Bad scaler override '{chunk}': {exc}") from exc
    return overrides


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def encode_personality(p: Personality) -> int:
    if not isinstance(p, Personality):
        raise TypeError(f"encode_personality expects a Personality, got {type(p).__name__}")
    return 1 if p is Personality.EXTROVERT else 0


def encode_leader(flag: bool) -> int:
    return 1 if flag else 0


def build_matrix(records: Sequence[StudentRecord], params: ScalerParams) -> FeatureMatrix:
    rows: list[list[float]] = []
    clamped: list[tuple[int, str]] = []
    for record in records:
        cet, cet_clamped = _scale(params, record.cet4, "cet4")
        gpa, gpa_clamped = _scale(params, record.gpa, "gpa")
        if cet_clamped:
            clamped.append((record.serial, "cet4"))
        if gpa_clamped:
            clamped.append((record.serial, "gpa"))
        rows.append(
            [
                cet,
                gpa,
                float(encode_personality(record.personality)),
                float(encode_leader(record.student_leader)),
            ]
        )

    if clamped:
        logger.warning(
            "Clamped %d feature values outside the scaler range: %s",
            len(clamped),
            ", ".join(f"{serial}:{name}" for serial, name in clamped),
        )

    data = np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_COLUMNS))
    return FeatureMatrix(
        data=data,
        columns=FEATURE_COLUMNS,
        row_serials=tuple(record.serial for record in records),
        clamped=tuple(clamped),
    )
