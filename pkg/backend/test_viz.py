from __future__ import annotations

import math
import unittest
import xml.etree.ElementTree as ET
from unittest import mock

import hypothesis.strategies as st
import numpy as np
from hypothesis import example, given, settings

from backend.engines import viz
from backend.engines.viz import (
    SVG_NS,
    BadShape,
    EmptyInput,
    Point2D,
    cluster_hulls,
    convex_hull,
    radar_geometry,
    render_histogram,
    render_radar,
    render_scatter,
)
from backend.models.schemas import RadarVector

NS = {"svg": SVG_NS}


def _parse(document: str) -> ET.Element:
    return ET.fromstring(document.split("\n", 1)[1])


def _cross(o: Point2D, a: Point2D, b: Point2D) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _brute_force_hull_vertices(points: list[Point2D]) -> set[Point2D]:
    """Endpoints of every pair whose line has all points on its left or between them."""
    unique = sorted(set(points))
    if len(unique) == 1:
        return set(unique)
    vertices: set[Point2D] = set()
    for a in unique:
        for b in unique:
            if a == b:
                continue
            edge = True
            for p in unique:
                turn = _cross(a, b, p)
                if turn < 0:
                    edge = False
                    break
                if turn == 0 and not (
                    min(a.x, b.x) <= p.x <= max(a.x, b.x) and min(a.y, b.y) <= p.y <= max(a.y, b.y)
                ):
                    edge = False
                    break
            if edge:
                vertices.update((a, b))
    return vertices


_GRID_POINTS = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=40)


def _points(coords: list[tuple[int, int]]) -> list[Point2D]:
    return [Point2D(float(x), float(y)) for x, y in coords]


def _radar(value: float) -> RadarVector:
    return RadarVector(cet_norm=value, gpa_norm=value, extrovert_fraction=value, leader_fraction=value)


class ConvexHullTests(unittest.TestCase):
    def test_square_with_centre(self) -> None:
        pts = [Point2D(0, 0), Point2D(1, 0), Point2D(1, 1), Point2D(0, 1), Point2D(0.5, 0.5)]
        hull = convex_hull(pts)
        self.assertEqual(
            hull.vertices, (Point2D(0, 0), Point2D(1, 0), Point2D(1, 1), Point2D(0, 1))
        )

    def test_triangle(self) -> None:
        pts = [Point2D(2, 3), Point2D(0, 0), Point2D(4, 0)]
        self.assertEqual(convex_hull(pts).vertices, (Point2D(0, 0), Point2D(4, 0), Point2D(2, 3)))

    def test_collinear_points_keep_extremes(self) -> None:
        pts = [Point2D(float(t), 2.0 * t) for t in (3, 0, 1, 2)]
        self.assertEqual(convex_hull(pts).vertices, (Point2D(0, 0), Point2D(3, 6)))

    def test_duplicates_and_tiny_inputs(self) -> None:
        self.assertEqual(convex_hull([]).vertices, ())
        self.assertEqual(convex_hull([Point2D(1, 1)] * 3).vertices, (Point2D(1, 1),))

    def test_boundary_points_are_dropped(self) -> None:
        pts = [Point2D(0, 0), Point2D(1, 0), Point2D(2, 0), Point2D(2, 2), Point2D(0, 2)]
        self.assertNotIn(Point2D(1, 0), convex_hull(pts).vertices)

    def test_non_finite_point(self) -> None:
        with self.assertRaises(ValueError):
            Point2D(float("nan"), 0.0)

    @given(_GRID_POINTS)
    @settings(max_examples=500, deadline=None)
    @example([(0, 0), (1, 1), (2, 2), (3, 3)])
    def test_hull_is_strictly_convex_and_encloses_every_point(self, coords: list[tuple[int, int]]) -> None:
        # Small integer grids make collinear and repeated points common.
        pts = [Point2D(float(x), float(y)) for x, y in coords]
        vertices = convex_hull(pts).vertices
        unique = sorted(set(pts))
        self.assertTrue(set(vertices) <= set(unique))
        self.assertEqual(len(set(vertices)), len(vertices))
        if len(vertices) < 3:
            self.assertEqual(vertices, tuple(dict.fromkeys([unique[0], unique[-1]])))
            self.assertTrue(all(_cross(unique[0], unique[-1], p) == 0 for p in unique))
            return
        self.assertEqual(vertices[0], unique[0])
        m = len(vertices)
        for i in range(m):
            a, b, c = vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]
            self.assertGreater(_cross(a, b, c), 0)
            self.assertTrue(all(_cross(a, b, p) >= 0 for p in unique))

    @given(_GRID_POINTS)
    @settings(max_examples=300, deadline=None)
    def test_vertices_match_brute_force_hull(self, coords: list[tuple[int, int]]) -> None:
        pts = _points(coords)
        self.assertEqual(set(convex_hull(pts).vertices), _brute_force_hull_vertices(pts))

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_input_order_does_not_matter(self, data: st.DataObject) -> None:
        coords = data.draw(_GRID_POINTS)
        shuffled = data.draw(st.permutations(coords))
        self.assertEqual(convex_hull(_points(shuffled)).vertices, convex_hull(_points(coords)).vertices)

    @given(st.integers(3, 60), st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_real_valued_points(self, n: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        pts = [Point2D(float(x), float(y)) for x, y in rng.uniform(-50.0, 50.0, size=(n, 2))]
        vertices = convex_hull(pts).vertices
        self.assertEqual(set(vertices), _brute_force_hull_vertices(pts))
        m = len(vertices)
        self.assertGreaterEqual(m, 3)
        for i in range(m):
            self.assertGreater(_cross(vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]), 0)
        reversed_hull = convex_hull(list(reversed(pts))).vertices
        self.assertEqual(reversed_hull, vertices)

    def test_cluster_hulls_group_by_label(self) -> None:
        z = np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5]], dtype=float)
        hulls = cluster_hulls(z, [0, 0, 0, 1, 1])
        self.assertEqual(sorted(hulls), [0, 1])
        self.assertEqual(len(hulls[0].vertices), 3)
        self.assertEqual(len(hulls[1].vertices), 2)


class ScatterTests(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(8)
        centres = np.array([[0, 0], [4, 0], [0, 4], [4, 4]], dtype=float)
        self.labels = [i % 4 for i in range(40)]
        self.z = centres[self.labels] + rng.normal(scale=0.3, size=(40, 2))

    def test_empty_input_draws_axes_only(self) -> None:
        root = _parse(render_scatter(np.zeros((0, 2)), [], {}))
        self.assertIsNotNone(root.find("svg:g[@class='axes']", NS))
        self.assertEqual(root.findall(".//*[@data-cluster]", NS), [])

    def test_four_clusters_use_four_marker_shapes(self) -> None:
        hulls = cluster_hulls(self.z, self.labels)
        root = _parse(render_scatter(self.z, self.labels, hulls, explained_ratio=[0.6, 0.3]))
        markers = root.findall("svg:g[@class='markers']/*", NS)
        self.assertEqual(len(markers), 40)
        shapes = {m.get("class").split()[1] for m in markers}
        self.assertEqual(shapes, {"circle", "square", "diamond", "triangle"})
        self.assertEqual(len(root.findall(".//svg:polygon[@class='hull']", NS)), 4)
        labels = [t.text for t in root.findall("svg:text", NS)]
        self.assertIn("PC1 (60.0%)", labels)

    def test_small_clusters_have_no_hull_polygon(self) -> None:
        z = np.array([[0, 0], [1, 1], [3, 0], [4, 1], [3, 2]], dtype=float)
        labels = [0, 0, 1, 1, 1]
        root = _parse(render_scatter(z, labels, cluster_hulls(z, labels)))
        hulls = root.findall(".//svg:polygon[@class='hull']", NS)
        self.assertEqual([h.get("data-cluster") for h in hulls], ["1"])

    def test_output_is_deterministic(self) -> None:
        hulls = cluster_hulls(self.z, self.labels)
        self.assertEqual(
            render_scatter(self.z, self.labels, hulls), render_scatter(self.z, self.labels, hulls)
        )

    def test_bad_shapes(self) -> None:
        with self.assertRaises(BadShape):
            render_scatter(np.zeros((3, 3)), [0, 0, 0], {})
        with self.assertRaises(BadShape):
            render_scatter(np.zeros((3, 2)), [0, 0], {})
        with self.assertRaises(BadShape):
            render_scatter(np.array([[0.0, math.inf]]), [0], {})


class RadarTests(unittest.TestCase):
    def test_zero_vector_collapses_to_centre(self) -> None:
        centre, _, vertices = radar_geometry(_radar(0.0))
        self.assertTrue(all(v == centre for v in vertices))

    def test_ones_touch_outer_ring(self) -> None:
        (cx, cy), radius, vertices = radar_geometry(_radar(1.0))
        for x, y in vertices:
            self.assertAlmostEqual(math.hypot(x - cx, y - cy), radius, delta=1e-9)

    def test_half_values(self) -> None:
        (cx, cy), radius, vertices = radar_geometry(_radar(0.5))
        self.assertEqual((cx, cy, radius), (400.0, 300.0, 220.0))
        for x, y in vertices:
            self.assertAlmostEqual(math.hypot(x - cx, y - cy), 110.0, delta=1e-9)

    def test_document_structure(self) -> None:
        root = _parse(render_radar(_radar(0.5), "Cluster 0: technical"))
        rings = root.findall(".//svg:polygon[@class='ring']", NS)
        self.assertEqual([r.get("data-level") for r in rings], ["0.25", "0.5", "0.75", "1"])
        (profile,) = root.findall("svg:polygon[@class='profile']", NS)
        for pair in profile.get("points").split():
            x, y = map(float, pair.split(","))
            self.assertAlmostEqual(math.hypot(x - 400, y - 300), 110.0, delta=1e-5)
        self.assertEqual(root.find("svg:title", NS).text, "Cluster 0: technical")


class HistogramTests(unittest.TestCase):
    def _bars(self, values: list[float], bins: int) -> list[ET.Element]:
        return _parse(render_histogram(values, bins, "GPA")).findall(".//svg:rect[@class='bar']", NS)

    def test_equal_values_fill_one_bin(self) -> None:
        counts = [int(b.get("data-count")) for b in self._bars([3.0] * 7, 10)]
        self.assertEqual(len(counts), 10)
        self.assertEqual(sorted(counts), [0] * 9 + [7])

    def test_grid_values_one_per_bar(self) -> None:
        counts = [int(b.get("data-count")) for b in self._bars([float(v) for v in range(10)], 10)]
        self.assertEqual(counts, [1] * 10)

    def test_counts_sum_to_n(self) -> None:
        values = np.random.default_rng(12).normal(size=137).tolist()
        bars = self._bars(values, 9)
        self.assertEqual(sum(int(b.get("data-count")) for b in bars), 137)
        edges = [(float(b.get("data-lower")), float(b.get("data-upper"))) for b in bars]
        self.assertEqual(edges[0][0], min(values))
        self.assertEqual(edges[-1][1], max(values))

    def test_empty_input(self) -> None:
        with self.assertRaises(EmptyInput):
            render_histogram([], 10, "empty")

    def test_short_palette_still_colours_bars(self) -> None:
        runtime_viz = viz._runtime_viz
        single = runtime_viz.model_copy(update={"palette": runtime_viz.palette[:1]})
        with mock.patch.object(viz, "_runtime_viz", single):
            root = _parse(render_histogram([1.0, 2.0, 3.0], 3, "GPA"))
        self.assertEqual(root.find("svg:g[@class='bars']", NS).get("fill"), runtime_viz.palette[0].color)


if __name__ == "__main__":
    unittest.main()
