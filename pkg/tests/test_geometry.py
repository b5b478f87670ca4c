import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emdgeom.geometry import (clip_segment_box, clip_simplex_box, dist, pairwise,
                              point_box_extremes, point_segment_extremes,
                              segment_segment_extremes, simplex_measure)

coord = st.floats(-5, 5, allow_nan=False)
vec2 = st.tuples(coord, coord).map(np.array)
metric = st.sampled_from(["l1", "l2"])


def sampled_extremes(p, a, b, metric, k=10**5):
    t = np.linspace(0, 1, k)[:, None]
    d = dist(p, a + t * (b - a), metric)
    return d.min(), d.max()


@pytest.mark.parametrize("p,q,m,want", [((0, 0), (3, 4), "l2", 5.0), ((0, 0), (3, 4), "l1", 7.0),
                                        ((1, 1), (1, 1), "l2", 0.0)])
def test_dist_values(p, q, m, want):
    assert dist(np.array(p, float), np.array(q, float), m) == pytest.approx(want)


def test_point_segment_collinear_and_perpendicular():
    assert point_segment_extremes(np.array([0., 0]), np.array([1., 0]), np.array([2., 0])) == \
        pytest.approx((1, 2))
    lo, hi = point_segment_extremes(np.array([0., 1]), np.array([-1., 0]), np.array([1., 0]))
    assert (lo, hi) == pytest.approx((1, math.sqrt(2)))


def test_point_segment_l1_frozen():
    p, a, b = np.array([3., 4]), np.array([0., 0]), np.array([0., 1])
    lo, hi = point_segment_extremes(p, a, b, "l1")
    assert (lo, hi) == pytest.approx((6.0, 7.0), abs=1e-12)
    assert sampled_extremes(p, a, b, "l1") == pytest.approx((6.0, 7.0), abs=1e-3)


def test_point_box_values():
    lo, hi = point_box_extremes(np.array([0., 0]), np.array([1., 1]), np.array([2., 2]))
    assert (lo, hi) == pytest.approx((math.sqrt(2), 2 * math.sqrt(2)))
    lo, _ = point_box_extremes(np.array([0.5, 0.5]), np.array([0., 0]), np.array([1., 1]))
    assert lo == 0.0


def test_point_box_facet_case_frozen():
    p, lo_c, hi_c = np.array([0, 0.5]), np.array([1., 0]), np.array([2., 1])
    lo, hi = point_box_extremes(p, lo_c, hi_c)
    want = (1.0, math.sqrt(4.25))
    assert (lo, hi) == pytest.approx(want, abs=1e-12)
    g = np.linspace(0, 1, 301)
    X = np.stack(np.meshgrid(1 + g, g), -1).reshape(-1, 2)
    d = dist(p, X)
    assert (d.min(), d.max()) == pytest.approx(want, abs=1e-3)


def test_segment_segment_values():
    u = (np.array([0., 0]), np.array([1., 0]))
    assert segment_segment_extremes(u, (np.array([0., 1]), np.array([1., 1]))) == \
        pytest.approx((1, math.sqrt(2)))
    lo, _ = segment_segment_extremes(u, (np.array([0.5, -1]), np.array([0.5, 1])))
    assert lo == pytest.approx(0.0)


def test_segment_segment_frozen():
    u = (np.array([0., 0]), np.array([1., 0]))
    v = (np.array([2., 1]), np.array([3., 1]))
    want = (math.sqrt(2), math.sqrt(10))
    assert segment_segment_extremes(u, v) == pytest.approx(want, abs=1e-12)
    t = np.linspace(0, 1, 1001)[:, None]
    D = pairwise(u[0] + t * (u[1] - u[0]), v[0] + t * (v[1] - v[0]))
    assert (D.min(), D.max()) == pytest.approx(want, abs=1e-3)


def test_simplex_measure():
    assert simplex_measure(np.array([[0., 0], [1, 0], [0, 1]])) == pytest.approx(0.5)
    assert simplex_measure(np.array([[0., 0], [3, 4]])) == pytest.approx(5.0)
    tet = np.array([[0., 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert simplex_measure(tet) == pytest.approx(1 / 6)


def test_clip_segment_box():
    lo, hi = np.zeros(2), np.ones(2)
    assert clip_segment_box(np.array([.2, .2]), np.array([.8, .5]), lo, hi) == \
        pytest.approx(math.hypot(.6, .3))
    assert clip_segment_box(np.array([2., 2]), np.array([3., 3]), lo, hi) == 0.0
    assert clip_segment_box(np.array([-1, .5]), np.array([2, .5]), lo, hi) == pytest.approx(1.0)


def test_clip_simplex_box_cases():
    tri = np.array([[0., 0], [1, 0], [0, 1]])
    assert clip_simplex_box(tri, np.array([-1., -1]), np.array([2., 2])) == pytest.approx(0.5)
    assert clip_simplex_box(tri, np.array([3., 3]), np.array([4., 4])) == 0.0


def test_clip_simplex_box_frozen():
    # the box lies inside x + y <= 1, so the retained area is the whole box
    tri = np.array([[0., 0], [1, 0], [0, 1]])
    lo, hi = np.zeros(2), np.full(2, 0.5)
    assert clip_simplex_box(tri, lo, hi) == pytest.approx(0.25, abs=1e-12)
    est, err = clip_simplex_box(tri, lo, hi, method="mc", samples=10**6, seed=0)
    assert abs(est - 0.25) <= max(err, 1e-3)


@given(vec2, vec2, vec2, metric)
def test_point_segment_bracket(p, a, b, m):
    lo, hi = point_segment_extremes(p, a, b, m)
    t = np.random.default_rng(0).random((1000, 1))
    d = dist(p, a + t * (b - a), m)
    assert lo <= d.min() + 1e-9 and d.max() <= hi + 1e-9


@given(st.lists(st.tuples(coord, coord, coord), min_size=3, max_size=3), metric)
def test_metric_axioms(pts, m):
    x, y, z = (np.array(p) for p in pts)
    assert dist(x, y, m) == dist(y, x, m)
    assert dist(x, z, m) <= dist(x, y, m) + dist(y, z, m) + 1e-12


def test_triangle_inequality_many():
    rng = np.random.default_rng(1)
    X, Y, Z = (rng.normal(size=(10**4, 3)) for _ in range(3))
    for m in ("l1", "l2"):
        assert np.all(dist(X, Z, m) <= dist(X, Y, m) + dist(Y, Z, m) + 1e-12)


@given(st.integers(0, 10**6))
def test_clip_additivity(seed):
    rng = np.random.default_rng(seed)
    for d in (2, 3):
        V = rng.uniform(0, 1, (d + 1, d))
        lo = rng.uniform(-0.2, 0.5, d)
        h = rng.uniform(0.2, 0.8)
        parent = clip_simplex_box(V, lo, lo + h)
        kids = 0.0
        for off in np.ndindex(*(2,) * d):
            c = lo + np.array(off) * h / 2
            kids += clip_simplex_box(V, c, c + h / 2)
        assert kids == pytest.approx(parent, abs=1e-9)


def test_clip_additivity_monte_carlo():
    V = np.array([[0., 0], [1, 0.2], [0.3, 0.9]])
    lo, h = np.zeros(2), 1.0
    parent, perr = clip_simplex_box(V, lo, lo + h, method="mc", samples=10**5, seed=3)
    kids, var = 0.0, 0.0
    for k, off in enumerate(np.ndindex(2, 2)):
        c = lo + np.array(off) * h / 2
        est, err = clip_simplex_box(V, c, c + h / 2, method="mc", samples=10**5, seed=10 + k)
        kids += est
        var += (err / 3) ** 2
    sigma = math.sqrt(var + (perr / 3) ** 2)
    assert abs(kids - parent) <= 3 * sigma + 1e-12
