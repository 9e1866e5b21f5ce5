import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import components, ellipse_points, is_curved_brute, midpoint_circle, raster_curve

from elsepupil import edges, lines
from elsepupil.lines import Polyline

junction_free = arrays(bool, st.tuples(st.integers(2, 30), st.integers(2, 30))).map(
    lambda e: edges.delete_junctions(edges.thin_edges(e))
)
point_lists = st.lists(st.tuples(st.integers(-40, 40), st.integers(-40, 40)), min_size=2, max_size=40)


def semicircle(r=10.0, n=200):
    return ellipse_points(0, 0, r, r, 0, n=n, t0=0, t1=math.pi, endpoint=True)


def is_8_chain(p):
    d = np.abs(np.diff(p, axis=0))
    return bool(np.all(d.max(axis=1) == 1)) if len(p) > 1 else True


class TestCollect:
    def test_empty(self):
        assert lines.collect_lines(np.zeros((8, 8), bool)) == []

    def test_straight_run(self):
        e = np.zeros((5, 20), bool)
        e[2, 4:14] = True
        (ln,) = lines.collect_lines(e)
        assert len(ln) == 10
        assert not ln.closed
        assert ln.points[0].tolist() == [4, 2]
        assert ln.points[-1].tolist() == [13, 2]

    def test_ring_and_arc(self):
        e = midpoint_circle(15, 15, 8, (32, 60))
        arc = midpoint_circle(40, 15, 9, (32, 60))
        arc[15:, :] = False
        e |= arc
        e = edges.delete_junctions(edges.thin_edges(e))
        got = lines.collect_lines(e)
        assert len(got) == components(e) == 2
        assert sorted(ln.closed for ln in got) == [False, True]

    def test_isolated_pixel(self):
        e = np.zeros((3, 3), bool)
        e[1, 1] = True
        (ln,) = lines.collect_lines(e)
        assert ln.points.tolist() == [[1, 1]]
        assert not ln.closed

    def test_open_line_endpoints_have_one_neighbour(self):
        pts = raster_curve(ellipse_points(30, 30, 15, 9, 0.5, n=300, t0=0.3, t1=2.5, endpoint=True))
        e = np.zeros((61, 61), bool)
        e[pts[:, 1], pts[:, 0]] = True
        e = edges.delete_junctions(edges.thin_edges(e))
        for ln in lines.collect_lines(e):
            if ln.closed or len(ln) < 2:
                continue
            nb = edges.neighbor_count(e)
            assert nb[ln.ys[0], ln.xs[0]] == 1
            assert nb[ln.ys[-1], ln.xs[-1]] == 1

    @given(junction_free)
    def test_partition_of_edge_pixels(self, e):
        got = lines.collect_lines(e)
        seen = np.zeros(e.shape, int)
        for ln in got:
            np.add.at(seen, (ln.ys, ln.xs), 1)
            assert is_8_chain(ln.points)
            if ln.closed:
                assert max(abs(ln.points[-1] - ln.points[0])) <= 1
        assert np.array_equal(seen, e.astype(int))

    @given(junction_free)
    def test_deterministic(self, e):
        a = lines.collect_lines(e)
        b = lines.collect_lines(e.copy())
        assert [x.points.tolist() for x in a] == [x.points.tolist() for x in b]


class TestCurved:
    def test_horizontal_line(self):
        assert not lines.is_curved(np.column_stack((np.arange(20), np.zeros(20))))

    def test_semicircle(self):
        pts = semicircle()
        c = pts.mean(axis=0)
        assert math.hypot(*c) == pytest.approx(20 / math.pi, rel=0.01)
        assert np.hypot(*(pts - c).T).min() == pytest.approx(10 - 20 / math.pi, rel=0.01)
        assert lines.is_curved(pts)
        assert lines.is_curved(Polyline(raster_curve(semicircle() + 20)))

    def test_two_points(self):
        assert not lines.is_curved(np.array([[0, 0], [5, 5]]))

    def test_single_point(self):
        assert not lines.is_curved(np.array([[3, 3]]))

    def test_thin_diagonal_band(self):
        # wide in both axes but the centroid sits on the line
        assert not lines.is_curved(np.column_stack((np.arange(30), np.arange(30))))

    @given(point_lists, st.floats(0.5, 8))
    def test_matches_direct_formula(self, pts, d):
        assert lines.is_curved(np.array(pts), d) == is_curved_brute(pts, d)

    @given(point_lists, st.integers(-500, 500), st.integers(-500, 500))
    def test_translation_invariant(self, pts, dx, dy):
        p = np.array(pts)
        assert lines.is_curved(p) == lines.is_curved(p + [dx, dy])

    @given(point_lists)
    def test_reversal_invariant(self, pts):
        p = np.array(pts)
        assert lines.is_curved(p) == lines.is_curved(p[::-1])


class TestPrune:
    def test_straight_and_arc(self):
        straight = Polyline(np.column_stack((np.arange(20), np.full(20, 3))))
        arc = Polyline(raster_curve(semicircle() + 30))
        assert lines.prune_lines([straight, arc]) == [arc]

    def test_empty(self):
        assert lines.prune_lines([]) == []

    def test_short_arc(self):
        arc = Polyline(np.array([[0, 0], [1, 3], [4, 4], [7, 3]]))
        assert lines.is_curved(arc, 1.0)
        assert lines.prune_lines([arc], 1.0, 5) == []
        assert lines.prune_lines([arc], 1.0, 4) == [arc]

    @given(junction_free, st.floats(0.5, 6), st.integers(1, 12))
    def test_fused_route_matches_composition(self, e, d, n):
        fused = lines.collect_curved_lines(e, d, n)
        composed = lines.prune_lines(lines.collect_lines(e), d, n)
        assert [(x.points.tolist(), x.closed) for x in fused] == [(x.points.tolist(), x.closed) for x in composed]

    def test_fused_route_on_scene(self):
        from elsepupil import raster, synth

        (img, _), = synth.generate_suite("clean", 1, 5)
        e = edges.filter_edges_morphologic(raster.canny(raster.normalize(img), raster.processing_region(img.shape)))
        fused = lines.collect_curved_lines(e)
        composed = lines.prune_lines(lines.collect_lines(e))
        assert len(fused) > 0
        assert [x.points.tolist() for x in fused] == [x.points.tolist() for x in composed]
