import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emdgeom.oracle import oracle_emd
from emdgeom.pipeline import (DELTA_RULES, DeltaClampWarning, PipelineConfig, PipelineError,
                              delta_for, run)

from conftest import (make_scene, points_side, random_points_segments, random_points_triangles,
                      random_segments_segments, tightness_scene)

TRI = [[[0, 0], [1, 0], [0, 1]]]


@pytest.mark.parametrize("kind,eps,want", [
    ("points-segments", 0.17, 0.01), ("points-triangles", 0.09, 0.01),
    ("points-simplices", 0.21, 0.01), ("segments-segments", 0.3, 0.1),
])
def test_delta_mapping(kind, eps, want):
    assert delta_for(kind, eps) == (pytest.approx(want), False)


def test_clamp_warns():
    with pytest.warns(DeltaClampWarning, match=r"delta clamped to 1/\(2π\)"):
        delta, clamped = delta_for("points-triangles", 9.0)
    assert clamped and delta == pytest.approx(1 / (2 * math.pi))
    with pytest.warns(DeltaClampWarning, match="1/4"):
        assert delta_for("points-segments", 9.0)[0] == 0.25


def test_unsupported_pair():
    sc = make_scene({"kind": "segments", "items": [[[0, 0], [1, 0]]]},
                    {"kind": "triangles", "items": [[[0, 0], [1, 0], [0, 2]]]})
    with pytest.raises(PipelineError, match="unsupported"):
        run(sc)


def test_point_mass_vs_unit_segment():
    sc = make_scene(points_side([[0, 0]], [1.0]), {"kind": "segments", "items": [[[0, 0], [1, 0]]]})
    plan = run(sc, PipelineConfig(epsilon=0.2))
    o = oracle_emd(sc, 1000)
    lower, est, upper = plan.costs()
    assert o.cost - o.error_bound <= upper <= 1.2 * (o.cost + o.error_bound)
    assert lower <= 0.5 <= upper
    assert plan.meta["guarantee"].certified


def test_identical_segments_only_additive():
    segs = [[[0, 0], [1, 0]], [[0.2, 0.5], [0.7, 0.9]]]
    sc = make_scene({"kind": "segments", "items": segs}, {"kind": "segments", "items": segs})
    for eps in (0.1, 0.5):
        plan = run(sc, PipelineConfig(epsilon=eps))
        g = plan.meta["guarantee"]
        assert g.cost_upper <= g.additive_bound
        assert plan.meta["validation"]["max_violation"] <= 1e-9


def test_tightness_forced_kappa():
    plan = run(tightness_scene(), PipelineConfig(epsilon=0.3, kappa=1.0))
    # the y=2 segment is matched to y=1; what remains (y=0 to y=3) costs 3
    f = plan.cost_factor
    assert plan.meta["residual_flow_cost"] * f == pytest.approx(3.0, abs=1e-6)
    assert plan.matched.cost_upper() * f == pytest.approx(1.0, abs=1e-9)
    assert plan.costs()[0] == pytest.approx(4.0, abs=1e-6)


def test_swapped_sides():
    tri = {"kind": "triangles", "items": TRI}
    pts = points_side([[2, 2], [0.1, 0.1]], [0.25, 0.25])
    a = run(make_scene(pts, tri), PipelineConfig(epsilon=0.5))
    b = run(make_scene(tri, pts), PipelineConfig(epsilon=0.5))
    assert b.meta["swapped"] and not a.meta["swapped"]
    assert b.costs()[2] == pytest.approx(a.costs()[2], rel=1e-9)


MAKERS = {"ps": random_points_segments, "pt": random_points_triangles, "ss": random_segments_segments}


@settings(max_examples=10)
@given(st.integers(0, 10**6), st.sampled_from(sorted(MAKERS)))
def test_guarantee_against_oracle(seed, key):
    sc = MAKERS[key](np.random.default_rng(seed))
    eps = 0.4
    plan = run(sc, PipelineConfig(epsilon=eps))
    g = plan.meta["guarantee"]
    o = oracle_emd(sc, 150)
    assert g.cost_upper <= (1 + eps) * (o.cost + o.error_bound) + g.additive_bound
    assert g.sandwich_holds and g.flow_certified
    assert g.cost_upper <= g.ratio * g.cost_lower + g.sandwich_additive + 1e-9
    assert plan.meta["validation"]["max_violation"] <= 1e-9


@settings(max_examples=10)
@given(st.integers(0, 10**6), st.sampled_from(["ps", "pt"]))
def test_delta_monotone(seed, key):
    sc = MAKERS[key](np.random.default_rng(seed))
    coarse = run(sc, PipelineConfig(epsilon=0.4, validate=False))
    fine = run(sc, PipelineConfig(epsilon=0.2, validate=False))
    assert fine.costs()[2] <= coarse.costs()[2] + 1e-7


def test_pieces_recorded():
    plan = run(random_points_segments(np.random.default_rng(3)), PipelineConfig(epsilon=0.3))
    assert plan.meta["pieces"][1] == len(plan.pieces_s)


def test_constants_recorded():
    plan = run(random_points_segments(np.random.default_rng(4)), PipelineConfig(epsilon=0.2))
    g = plan.meta["guarantee"]
    assert g.delta == pytest.approx(0.2 / DELTA_RULES["points-segments"][0])
    assert g.constants
