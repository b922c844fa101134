"""
Cohort Dataset

Parsing, validation, summary statistics and synthetic generation for
student cohort tables (serial, CET-4, GPA, personality, leader flag, job).
"""

from __future__ import annotations

import io
import logging
import math
import re
from collections import Counter
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from backend.config.runtime import get_runtime_config
from backend.models.schemas import (
    JOB_ORDER,
    CohortSummary,
    FeatureSummary,
    HistogramBin,
    JobLabel,
    Personality,
    Rejection,
    StudentRecord,
    SyntheticSpec,
    ValidationBounds,
)

from .seeds import make_rng

logger = logging.getLogger(__name__)

CSV_HEADER = ("serial_number", "cet4", "gpa", "personality", "student_leader", "job")
MAX_FIELD_CHARS = 1024
_PARSER_LINE = re.compile(r"line (\d+)")

PERSONALITY_TOKENS: dict[str, Personality] = {
    "i": Personality.INTROVERT,
    "e": Personality.EXTROVERT,
}
JOB_TOKENS: dict[str, JobLabel] = {
    "sales post": JobLabel.SALES,
    "management post": JobLabel.MANAGEMENT,
    "technical post": JobLabel.TECHNICAL,
    "product post": JobLabel.PRODUCT,
    "other": JobLabel.OTHER,
}
LEADER_TOKENS: dict[str, bool] = {"1": True, "0": False}

_PERSONALITY_OUT = {v: k for k, v in PERSONALITY_TOKENS.items()}
_JOB_OUT = {v: k for k, v in JOB_TOKENS.items()}


class DatasetError(ValueError):
    """Base exception for cohort dataset errors."""


class MalformedRow(DatasetError):
    def __init__(self, line_no: int, detail: str = "") -> None:
        self.line_no = line_no
        message = f"Malformed row at line {line_no}"
        super().__init__(f"{message}: {detail}" if detail else message)


class UnknownCategory(DatasetError):
    def __init__(self, line_no: int, field: str, token: str = "") -> None:
        self.line_no = line_no
        self.field = field
        super().__init__(f"Unknown {field} category {token!r} at line {line_no}")


class DuplicateSerial(DatasetError):
    def __init__(self, serial: int) -> None:
        self.serial = serial
        super().__init__(f"Duplicate serial number {serial}")


class EmptyCohort(DatasetError):
    """Raised when a statistic is requested for an empty cohort."""


class InvalidSpec(DatasetError):
    """Raised when a synthetic cohort spec violates its invariants."""


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def read_table(csv_text: str) -> list[tuple[int, list[str]]]:
    """
    Tokenize a CSV document into ``(line_no, cells)`` pairs.

    Blank rows are dropped. Rows shorter than the first row come back padded
    with empty cells, so callers check required cells rather than widths.
    """
    text = csv_text.lstrip("\ufeff")
    nul = text.find("\x00")
    if nul >= 0:
        raise MalformedRow(text.count("\n", 0, nul) + 1, "NUL byte in input")

    body = text.lstrip()
    offset = text[: len(text) - len(body)].count("\n")
    if not body:
        return []

    try:
        frame = pd.read_csv(
            io.StringIO(body),
            header=None,
            index_col=False,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        line_no = offset + int(match.group(1)) if match else offset + 1
        raise MalformedRow(line_no, "unequal field count") from exc

    rows: list[tuple[int, list[str]]] = []
    for index, values in enumerate(frame.itertuples(index=False, name=None)):
        line_no = offset + index + 1
        cells = [value if isinstance(value, str) else "" for value in values]
        if all(not cell.strip() for cell in cells):
            continue
        if any(len(cell) > MAX_FIELD_CHARS for cell in cells):
            raise MalformedRow(line_no, f"field longer than {MAX_FIELD_CHARS} characters")
        rows.append((line_no, cells))
    return rows


def write_table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Write rows under ``header`` as ``\\n``-terminated CSV text."""
    frame = pd.DataFrame([[str(value) for value in row] for row in rows], columns=list(header))
    return frame.to_csv(index=False, lineterminator="\n")


def parse_records(csv_text: str) -> list[StudentRecord]:
    """Parse a cohort CSV document into records, preserving file order."""
    rows = read_table(csv_text)
    if not rows:
        raise MalformedRow(1, "missing header")

    (header_line, header), body = rows[0], rows[1:]
    if tuple(cell.strip() for cell in header) != CSV_HEADER:
        raise MalformedRow(header_line, f"expected header {','.join(CSV_HEADER)}")

    records: list[StudentRecord] = []
    seen: set[int] = set()
    for line_no, row in body:
        record = _parse_row(row, line_no)
        if record.serial in seen:
            raise DuplicateSerial(record.serial)
        seen.add(record.serial)
        records.append(record)
    return records


def _parse_row(row: list[str], line_no: int) -> StudentRecord:
    if len(row) != len(CSV_HEADER):
        raise MalformedRow(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")

    serial_raw, cet4_raw, gpa_raw, personality_raw, leader_raw, job_raw = (
        cell.strip() for cell in row
    )
    missing = [
        name
        for name, raw in zip(CSV_HEADER[:-1], (serial_raw, cet4_raw, gpa_raw, personality_raw, leader_raw))
        if not raw
    ]
    if missing:
        raise MalformedRow(line_no, f"missing {', '.join(missing)}")

    try:
        serial = int(serial_raw)
        cet4_value = float(cet4_raw)
        gpa = float(gpa_raw)
    except ValueError as exc:
        raise MalformedRow(line_no, str(exc)) from exc

    if serial <= 0:
        raise MalformedRow(line_no, f"serial must be positive, got {serial}")
    if not math.isfinite(cet4_value) or not math.isfinite(gpa):
        raise MalformedRow(line_no, "non-finite score")
    if not cet4_value.is_integer():
        raise MalformedRow(line_no, f"cet4 must be whole points, got {cet4_raw}")

    personality = PERSONALITY_TOKENS.get(personality_raw.lower())
    if personality is None:
        raise UnknownCategory(line_no, "personality", personality_raw)

    leader = LEADER_TOKENS.get(leader_raw)
    if leader is None:
        raise UnknownCategory(line_no, "student_leader", leader_raw)

    job: JobLabel | None = None
    if job_raw:
        job = JOB_TOKENS.get(" ".join(job_raw.lower().split()))
        if job is None:
            raise UnknownCategory(line_no, "job", job_raw)

    return StudentRecord(
        serial=serial,
        cet4=int(cet4_value),
        gpa=gpa,
        personality=personality,
        student_leader=leader,
        job=job,
    )


def serialize_records(records: Iterable[StudentRecord]) -> str:
    """Write records in the same CSV layout ``parse_records`` reads."""
    return write_table(
        CSV_HEADER,
        (
            (
                record.serial,
                record.cet4,
                repr(float(record.gpa)),
                _PERSONALITY_OUT[record.personality],
                1 if record.student_leader else 0,
                _JOB_OUT[record.job] if record.job is not None else "",
            )
            for record in records
        ),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def collect_rejections(
    records: Iterable[StudentRecord], bounds: ValidationBounds
) -> list[Rejection]:
    rejections: list[Rejection] = []
    for record in records:
        reason = _rejection_reason(record, bounds)
        if reason is not None:
            rejections.append(Rejection(serial=record.serial, reason=reason))
    return rejections


def validate_cohort(
    records: Sequence[StudentRecord], bounds: ValidationBounds
) -> list[StudentRecord]:
    """Keep records inside ``bounds``; rejections are logged, never raised."""
    rejected = {r.serial: r.reason for r in collect_rejections(records, bounds)}
    for serial, reason in rejected.items():
        logger.warning("Rejected record serial=%s reason=%s", serial, reason)
    return [record for record in records if record.serial not in rejected]


def _rejection_reason(record: StudentRecord, bounds: ValidationBounds) -> str | None:
    if not bounds.cet4_min <= record.cet4 <= bounds.cet4_max:
        return "OutOfRange(cet4)"
    if not bounds.gpa_min <= record.gpa <= bounds.gpa_max:
        return "OutOfRange(gpa)"
    return None


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------

def histogram_bins(values: Sequence[float], bin_count: int) -> list[HistogramBin]:
    """
    Equal-width bins over [min, max]; the last bin is right-inclusive.

    When every value is equal the range is widened to [v - 0.5, v + 0.5], so
    all values land in a single bin.
    """
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise EmptyCohort("Cannot bin an empty sequence")
    counts, edges = np.histogram(data, bins=bin_count)
    return [
        HistogramBin(lower=float(edges[i]), upper=float(edges[i + 1]), count=int(counts[i]))
        for i in range(bin_count)
    ]


def percentile(values: Sequence[float], p: float) -> float:
    """Linearly interpolated percentile at rank ``p * (n - 1)``, ``p`` in [0, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"percentile rank must lie in [0, 1], got {p}")
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise EmptyCohort("Cannot take a percentile of an empty sequence")
    return float(np.percentile(data, p * 100, method="linear"))


def summarize_values(values: Sequence[float], bin_count: int) -> FeatureSummary:
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise EmptyCohort("Cannot summarize an empty cohort")
    p25, median, p75 = (percentile(data, p) for p in (0.25, 0.5, 0.75))
    return FeatureSummary(
        count=int(data.size),
        mean=math.fsum(data.tolist()) / data.size,
        median=float(median),
        p25=float(p25),
        p75=float(p75),
        min=float(data.min()),
        max=float(data.max()),
        histogram=histogram_bins(data, bin_count),
    )


def summarize(records: Sequence[StudentRecord], bin_count: int) -> CohortSummary:
    if not records:
        raise EmptyCohort("Cannot summarize an empty cohort")

    n = len(records)
    job_counts = Counter(record.job for record in records if record.job is not None)
    return CohortSummary(
        count=n,
        cet4=summarize_values([r.cet4 for r in records], bin_count),
        gpa=summarize_values([r.gpa for r in records], bin_count),
        extrovert_fraction=sum(r.personality is Personality.EXTROVERT for r in records) / n,
        leader_fraction=sum(r.student_leader for r in records) / n,
        job_counts={job.value: job_counts[job] for job in JOB_ORDER if job_counts[job]},
    )


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[StudentRecord]:
    """
    Draw ``spec.n`` records from clamped normals and Bernoulli/categorical draws.

    Jobs are drawn first; when ``spec.archetypes`` names the drawn job its
    distribution replaces the cohort-wide one for that record.
    """
    spec = _checked_spec(spec)
    if spec.n == 0:
        return []

    rng = make_rng(seed)
    jobs = list(spec.job_mix.keys())
    probs = np.array([spec.job_mix[job] for job in jobs], dtype=float)
    probs = probs / probs.sum()

    bounds = spec.bounds
    cet_lo, cet_hi = math.ceil(bounds.cet4_min), math.floor(bounds.cet4_max)

    job_idx = rng.choice(len(jobs), size=spec.n, p=probs)
    cet_z = rng.standard_normal(spec.n)
    gpa_z = rng.standard_normal(spec.n)
    extro_u = rng.random(spec.n)
    leader_u = rng.random(spec.n)

    records: list[StudentRecord] = []
    for i in range(spec.n):
        job = jobs[int(job_idx[i])]
        dist = spec.archetypes.get(job) if spec.archetypes else None
        cet_mean, cet_sd = (dist.cet4_mean, dist.cet4_sd) if dist else (spec.cet4_mean, spec.cet4_sd)
        gpa_mean, gpa_sd = (dist.gpa_mean, dist.gpa_sd) if dist else (spec.gpa_mean, spec.gpa_sd)
        extro_p = dist.extrovert_prob if dist else spec.extrovert_prob
        leader_p = dist.leader_prob if dist else spec.leader_prob

        cet4 = int(np.clip(round(cet_mean + cet_sd * cet_z[i]), cet_lo, cet_hi))
        gpa = float(np.clip(round(gpa_mean + gpa_sd * gpa_z[i], 2), bounds.gpa_min, bounds.gpa_max))
        records.append(
            StudentRecord(
                serial=i + 1,
                cet4=cet4,
                gpa=gpa,
                personality=Personality.EXTROVERT if extro_u[i] < extro_p else Personality.INTROVERT,
                student_leader=bool(leader_u[i] < leader_p),
                job=job,
            )
        )
    return records


def _checked_spec(spec: SyntheticSpec) -> SyntheticSpec:
    try:
        return SyntheticSpec.model_validate(spec.model_dump())
    except ValidationError as exc:
        raise InvalidSpec(str(exc)) from exc


def make_blobs(
    centers: Sequence[Sequence[float]],
    sigma: float,
    per_blob: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs around ``centers``; returns (points, blob labels)."""
    center_arr = np.asarray(centers, dtype=float)
    if center_arr.ndim != 2 or center_arr.shape[0] == 0:
        raise InvalidSpec("centers must be a non-empty 2-D array")
    if sigma < 0 or per_blob < 0:
        raise InvalidSpec("sigma and per_blob must be non-negative")

    rng = make_rng(seed)
    labels = np.repeat(np.arange(center_arr.shape[0]), per_blob)
    noise = rng.normal(0.0, sigma, size=(labels.size, center_arr.shape[1]))
    return center_arr[labels] + noise, labels


def default_synthetic_spec(n: int | None = None) -> SyntheticSpec:
    """Synthetic cohort spec built from the runtime defaults."""
    runtime = get_runtime_config()
    syn = runtime.synthetic
    b = runtime.dataset.bounds
    return SyntheticSpec(
        n=syn.n if n is None else n,
        cet4_mean=syn.cet4_mean,
        cet4_sd=syn.cet4_sd,
        gpa_mean=syn.gpa_mean,
        gpa_sd=syn.gpa_sd,
        extrovert_prob=syn.extrovert_prob,
        leader_prob=syn.leader_prob,
        job_mix={JobLabel(name): p for name, p in syn.job_mix.items()},
        bounds=ValidationBounds(
            cet4_min=b.cet4_min, cet4_max=b.cet4_max, gpa_min=b.gpa_min, gpa_max=b.gpa_max
        ),
    )


UNIT_SQUARE_CORNERS: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))


def blob_records(
    sigma: float,
    per_blob: int,
    seed: int,
    bounds: ValidationBounds | None = None,
) -> list[StudentRecord]:
    """
    Records whose (CET-4, GPA) pairs form Gaussian blobs at the corners of
    the normalized unit square, mapped back onto ``bounds``.

    Personality and leader flag are constant so only the two continuous
    features separate the blobs; jobs are left unlabelled.
    """
    bounds = bounds or ValidationBounds()
    points, _ = make_blobs(UNIT_SQUARE_CORNERS, sigma, per_blob, seed)
    points = np.clip(points, 0.0, 1.0)
    cet_span = bounds.cet4_max - bounds.cet4_min
    gpa_span = bounds.gpa_max - bounds.gpa_min
    return [
        StudentRecord(
            serial=i + 1,
            cet4=int(round(bounds.cet4_min + cet_span * float(x))),
            gpa=round(bounds.gpa_min + gpa_span * float(y), 2),
            personality=Personality.EXTROVERT,
            student_leader=False,
            job=None,
        )
        for i, (x, y) in enumerate(points)
    ]
