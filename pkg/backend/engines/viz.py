"""
Visualization

Convex hulls (monotone chain) and deterministic SVG documents for the
cluster scatter, per-cluster radar charts and feature histograms.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from backend.config.runtime import get_runtime_config
from backend.models.schemas import RadarVector

from .dataset import histogram_bins

logger = logging.getLogger(__name__)
_runtime_viz = get_runtime_config().viz

SVG_NS = "http://www.w3.org/2000/svg"
RADAR_AXES: tuple[str, ...] = ("CET", "GPA", "Extrovert", "Leader")
RADAR_RINGS: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)


class VizError(ValueError):
    """Base exception for chart rendering errors."""


class BadShape(VizError):
    pass


class EmptyInput(VizError):
    pass


@dataclass(frozen=True, order=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise VizError(f"Point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class HullPolygon:
    """Counter-clockwise hull vertices starting at the lowest (x, y) point."""

    vertices: tuple[Point2D, ...]


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _cross(o: Point2D, a: Point2D, b: Point2D) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def convex_hull(points: Sequence[Point2D]) -> HullPolygon:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    unique = sorted(set(points))
    if len(unique) <= 2:
        return HullPolygon(vertices=tuple(unique))

    lower: list[Point2D] = []
    for p in unique:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)

    upper: list[Point2D] = []
    for p in reversed(unique):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    return HullPolygon(vertices=tuple(lower[:-1] + upper[:-1]))


def cluster_hulls(z: np.ndarray, labels: Sequence[int]) -> dict[int, HullPolygon]:
    coords = np.asarray(z, dtype=float)
    labels = [int(label) for label in labels]
    hulls: dict[int, HullPolygon] = {}
    for cluster_id in sorted(set(labels)):
        members = [
            Point2D(float(coords[i, 0]), float(coords[i, 1]))
            for i, label in enumerate(labels)
            if label == cluster_id
        ]
        hulls[cluster_id] = convex_hull(members)
    return hulls


# ---------------------------------------------------------------------------
# SVG helpers
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _svg_root(title: str) -> ET.Element:
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "version": "1.1",
            "width": str(_runtime_viz.width),
            "height": str(_runtime_viz.height),
            "viewBox": f"0 0 {_runtime_viz.width} {_runtime_viz.height}",
        },
    )
    ET.SubElement(root, "title").text = title
    ET.SubElement(
        root,
        "rect",
        {"class": "background", "x": "0", "y": "0", "width": str(_runtime_viz.width),
         "height": str(_runtime_viz.height), "fill": "#ffffff"},
    )
    return root


def _to_document(root: ET.Element) -> str:
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode", short_empty_elements=True)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n"


def _text(parent: ET.Element, x: float, y: float, content: str, **attrs: str) -> None:
    attributes = {"x": _fmt(x), "y": _fmt(y), "font-family": "sans-serif", "font-size": "14"}
    attributes.update(attrs)
    ET.SubElement(parent, "text", attributes).text = content


def _plot_area() -> tuple[float, float, float, float]:
    m = float(_runtime_viz.margin)
    return m, m, float(_runtime_viz.width) - m, float(_runtime_viz.height) - m


def _axes(parent: ET.Element) -> None:
    left, top, right, bottom = _plot_area()
    group = ET.SubElement(parent, "g", {"class": "axes", "stroke": "#333333", "stroke-width": "1"})
    ET.SubElement(group, "line", {"x1": _fmt(left), "y1": _fmt(bottom), "x2": _fmt(right), "y2": _fmt(bottom)})
    ET.SubElement(group, "line", {"x1": _fmt(left), "y1": _fmt(top), "x2": _fmt(left), "y2": _fmt(bottom)})


def _marker(parent: ET.Element, shape: str, x: float, y: float, color: str, cluster_id: int) -> None:
    size = 5.0
    attrs = {"class": f"marker {shape}", "fill": color, "data-cluster": str(cluster_id)}
    if shape == "circle":
        attrs.update({"cx": _fmt(x), "cy": _fmt(y), "r": _fmt(size)})
        ET.SubElement(parent, "circle", attrs)
    elif shape == "square":
        attrs.update({"x": _fmt(x - size), "y": _fmt(y - size), "width": _fmt(2 * size), "height": _fmt(2 * size)})
        ET.SubElement(parent, "rect", attrs)
    elif shape == "diamond":
        pts = [(x, y - size), (x + size, y), (x, y + size), (x - size, y)]
        attrs["points"] = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
        ET.SubElement(parent, "polygon", attrs)
    else:
        pts = [(x, y - size), (x + size, y + size), (x - size, y + size)]
        attrs["points"] = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
        ET.SubElement(parent, "polygon", attrs)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------

def render_scatter(
    z: np.ndarray,
    labels: Sequence[int],
    hulls: Mapping[int, HullPolygon],
    *,
    title: str = "Clusters in principal-component space",
    explained_ratio: Sequence[float] | None = None,
) -> str:
    coords = np.asarray(z, dtype=float)
    if coords.size == 0:
        coords = coords.reshape(0, 2)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise BadShape(f"Scatter input must be n x 2, got shape {coords.shape}")
    if len(labels) != coords.shape[0]:
        raise BadShape(f"{len(labels)} labels for {coords.shape[0]} points")
    if not np.all(np.isfinite(coords)):
        raise BadShape("Scatter coordinates must be finite")

    root = _svg_root(title)
    _axes(root)
    left, top, right, bottom = _plot_area()

    x_label, y_label = "PC1", "PC2"
    if explained_ratio is not None and len(explained_ratio) >= 2:
        x_label = f"PC1 ({100 * explained_ratio[0]:.1f}%)"
        y_label = f"PC2 ({100 * explained_ratio[1]:.1f}%)"
    _text(root, (left + right) / 2, bottom + 30, x_label, **{"text-anchor": "middle", "class": "axis-label"})
    _text(root, left - 25, (top + bottom) / 2, y_label, **{"text-anchor": "middle", "class": "axis-label",
          "transform": f"rotate(-90 {_fmt(left - 25)} {_fmt((top + bottom) / 2)})"})

    if coords.shape[0] == 0:
        return _to_document(root)

    x_lo, y_lo = coords.min(axis=0)
    x_hi, y_hi = coords.max(axis=0)
    x_span = x_hi - x_lo or 1.0
    y_span = y_hi - y_lo or 1.0
    pad = 10.0

    def to_canvas(x: float, y: float) -> tuple[float, float]:
        cx = left + pad + (x - x_lo) / x_span * (right - left - 2 * pad)
        cy = bottom - pad - (y - y_lo) / y_span * (bottom - top - 2 * pad)
        return cx, cy

    palette = _runtime_viz.palette
    hull_group = ET.SubElement(root, "g", {"class": "hulls"})
    for cluster_id in sorted(hulls):
        vertices = hulls[cluster_id].vertices
        if len(vertices) < 3:
            continue
        entry = palette[cluster_id % len(palette)]
        pts = " ".join(
            f"{_fmt(cx)},{_fmt(cy)}" for cx, cy in (to_canvas(v.x, v.y) for v in vertices)
        )
        ET.SubElement(
            hull_group,
            "polygon",
            {
                "class": "hull",
                "data-cluster": str(cluster_id),
                "points": pts,
                "fill": entry.color,
                "fill-opacity": _fmt(_runtime_viz.hull_opacity),
                "stroke": entry.color,
            },
        )

    marker_group = ET.SubElement(root, "g", {"class": "markers"})
    for (x, y), label in zip(coords, labels):
        entry = palette[int(label) % len(palette)]
        cx, cy = to_canvas(float(x), float(y))
        _marker(marker_group, entry.shape, cx, cy, entry.color, int(label))

    legend = ET.SubElement(root, "g", {"class": "legend"})
    for row, cluster_id in enumerate(sorted({int(label) for label in labels})):
        entry = palette[cluster_id % len(palette)]
        y = top + 12 + 18 * row
        _marker(legend, entry.shape, right - 90, y, entry.color, cluster_id)
        _text(legend, right - 78, y + 5, f"Cluster {cluster_id}", **{"font-size": "12"})

    return _to_document(root)


def radar_geometry(vector: RadarVector) -> tuple[tuple[float, float], float, list[tuple[float, float]]]:
    """(centre, outer radius, polygon vertices) in canvas units, axes clockwise from top."""
    cx = _runtime_viz.width / 2.0
    cy = _runtime_viz.height / 2.0
    radius = min(_runtime_viz.width, _runtime_viz.height) / 2.0 - _runtime_viz.margin - 40.0
    vertices: list[tuple[float, float]] = []
    for i, value in enumerate(vector.axes()):
        angle = -math.pi / 2 + i * 2 * math.pi / len(RADAR_AXES)
        vertices.append((cx + value * radius * math.cos(angle), cy + value * radius * math.sin(angle)))
    return (cx, cy), radius, vertices


def render_radar(vector: RadarVector, title: str) -> str:
    root = _svg_root(title)
    (cx, cy), radius, vertices = radar_geometry(vector)
    n_axes = len(RADAR_AXES)

    grid = ET.SubElement(root, "g", {"class": "grid", "fill": "none", "stroke": "#bbbbbb"})
    for ring in RADAR_RINGS:
        ring_pts = []
        for i in range(n_axes):
            angle = -math.pi / 2 + i * 2 * math.pi / n_axes
            ring_pts.append((cx + ring * radius * math.cos(angle), cy + ring * radius * math.sin(angle)))
        ET.SubElement(
            grid,
            "polygon",
            {"class": "ring", "data-level": _fmt(ring),
             "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in ring_pts)},
        )

    for i, name in enumerate(RADAR_AXES):
        angle = -math.pi / 2 + i * 2 * math.pi / n_axes
        ex, ey = cx + radius * math.cos(angle), cy + radius * math.sin(angle)
        ET.SubElement(grid, "line", {"class": "axis", "x1": _fmt(cx), "y1": _fmt(cy), "x2": _fmt(ex), "y2": _fmt(ey)})
        lx, ly = cx + (radius + 22) * math.cos(angle), cy + (radius + 22) * math.sin(angle)
        _text(root, lx, ly + 5, name, **{"text-anchor": "middle", "class": "axis-label"})

    color = _runtime_viz.palette[0].color
    ET.SubElement(
        root,
        "polygon",
        {
            "class": "profile",
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in vertices),
            "fill": color,
            "fill-opacity": "0.35",
            "stroke": color,
            "stroke-width": "2",
        },
    )
    _text(root, cx, _runtime_viz.margin, title, **{"text-anchor": "middle", "font-size": "18", "class": "title"})
    return _to_document(root)


def render_histogram(values: Sequence[float], bins: int, title: str) -> str:
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise EmptyInput("Histogram needs at least one value")

    counts = histogram_bins(data, bins)
    peak = max(b.count for b in counts)
    root = _svg_root(title)
    _axes(root)
    left, top, right, bottom = _plot_area()
    plot_height = bottom - (top + 30)
    bar_width = (right - left) / bins

    palette = _runtime_viz.palette
    bars = ET.SubElement(root, "g", {"class": "bars", "fill": palette[2 % len(palette)].color})
    for i, b in enumerate(counts):
        height = b.count / peak * plot_height
        ET.SubElement(
            bars,
            "rect",
            {
                "class": "bar",
                "data-count": str(b.count),
                "data-lower": repr(b.lower),
                "data-upper": repr(b.upper),
                "x": _fmt(left + i * bar_width),
                "y": _fmt(bottom - height),
                "width": _fmt(bar_width),
                "height": _fmt(height),
            },
        )

    _text(root, (left + right) / 2, top + 10, title, **{"text-anchor": "middle", "font-size": "18", "class": "title"})
    _text(root, left, bottom + 20, _fmt(counts[0].lower), **{"font-size": "12"})
    _text(root, right, bottom + 20, _fmt(counts[-1].upper), **{"font-size": "12", "text-anchor": "end"})
    return _to_document(root)
