import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emdgeom.discretize import PieceSet
from emdgeom.lift import (PlanError, assemble_plan, plan_cost_quadrature, plan_from_dict,
                          plan_to_dict, validate_plan)
from emdgeom.pipeline import PipelineConfig, run
from emdgeom.scene import normalize

from conftest import make_scene, points_side, random_points_segments, random_points_triangles


def point_pieces(P, w, side="P"):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return PieceSet(side, "point", np.arange(len(P)), P.copy(), P.copy(), np.asarray(w, float))


def single(kind, a, b, mass=1.0, side="S"):
    return PieceSet(side, kind, np.zeros(1, int), np.array([a], float), np.array([b], float),
                    np.array([mass]))


def unit_flow(mass=1.0):
    return SimpleNamespace(rows=np.array([0]), cols=np.array([0]), mass=np.array([mass]), cost=0.0)


def test_point_to_collinear_subsegment_closed_form():
    plan = assemble_plan(unit_flow(), point_pieces([[0, 0]], [1.0]), single("subsegment", [0, 0], [1, 0]))
    # integral of x over [0, 1]
    assert plan.cost_estimate == pytest.approx(0.5, abs=1e-9)
    assert (plan.dmin[0], plan.dmax[0]) == pytest.approx((0.0, 1.0))
    assert len(plan.assignments()) == 1


def test_point_above_subsegment_closed_form():
    plan = assemble_plan(unit_flow(), point_pieces([[0, 1]], [1.0]),
                         single("subsegment", [-0.5, 0], [0.5, 0]))
    # antiderivative of sqrt(x^2 + 1) is (x sqrt(x^2 + 1) + asinh x) / 2
    F = lambda x: 0.5 * (x * math.sqrt(x * x + 1) + math.asinh(x))
    assert plan.cost_estimate == pytest.approx(F(0.5) - F(-0.5), abs=1e-9)
    assert plan.cost_estimate == pytest.approx(2 * (0.25 * math.sqrt(1.25) + 0.5 * math.asinh(0.5)))


def test_point_to_square_cell():
    plan = assemble_plan(unit_flow(), point_pieces([[0, 0]], [1.0]), single("cell", [0, 0], [1, 1]))
    # mean distance from a corner of the unit square
    want = (math.sqrt(2) + math.asinh(1)) / 3
    assert plan.cost_estimate == pytest.approx(want, abs=1e-4)
    assert plan.dmax[0] == pytest.approx(math.sqrt(2))


def test_zero_length_transport():
    plan = assemble_plan(unit_flow(), point_pieces([[0.3, 0.3]], [1.0]),
                         point_pieces([[0.3, 0.3]], [1.0], "S"))
    assert plan.cost_upper == 0.0 and plan.cost_estimate == 0.0


def test_flow_piece_mismatch():
    flow = SimpleNamespace(rows=np.array([3]), cols=np.array([0]), mass=np.array([1.0]), cost=0.0)
    with pytest.raises(PlanError):
        assemble_plan(flow, point_pieces([[0, 0]], [1.0]), single("subsegment", [0, 0], [1, 0]))


def unit_segment_scene():
    return make_scene(points_side([[0, 0]], [1.0]), {"kind": "segments", "items": [[[0, 0], [1, 0]]]})


def test_injected_fault_reported():
    sc = unit_segment_scene()
    plan = run(sc, PipelineConfig(epsilon=0.2))
    assert plan.meta["validation"]["max_violation"] <= 1e-9
    plan.mass[0] += 1e-3
    rep = validate_plan(plan, normalize(sc))
    assert rep["max_violation"] == pytest.approx(1e-3, rel=1e-6)
    assert rep["object_violation_P"][0] == pytest.approx(1e-3, rel=1e-6)


def test_single_point_single_segment_covers_segment():
    plan = run(unit_segment_scene(), PipelineConfig(epsilon=0.2))
    assert plan.mass.sum() == pytest.approx(1.0)
    assert plan.pieces_s.measure.sum() == pytest.approx(1.0)


@given(st.integers(0, 10**6), st.booleans())
def test_estimate_inside_bracket_and_refinement(seed, tris):
    rng = np.random.default_rng(seed)
    sc = random_points_triangles(rng) if tris else random_points_segments(rng)
    plan = run(sc, PipelineConfig(epsilon=0.4))
    lo, est, hi = plan.cost_lower, plan.cost_estimate, plan.cost_upper
    assert lo - 1e-12 <= est <= hi + 1e-12
    assert plan.meta["validation"]["max_violation"] <= 1e-9
    for a in plan.assignments():
        assert a.mass > 0
        assert a.dmin * a.mass - 1e-12 <= a.cost_quadrature <= a.dmax * a.mass + 1e-12
    k8 = plan_cost_quadrature(plan, 8)
    k16 = plan_cost_quadrature(plan, 16)
    assert abs(k16 - k8) <= hi - lo + 1e-12


def test_export_round_trip(tmp_path):
    sc = random_points_segments(np.random.default_rng(5))
    plan = run(sc, PipelineConfig(epsilon=0.2))
    data = json.loads(json.dumps(plan_to_dict(plan)))
    back = plan_from_dict(data, normalize(sc))
    assert plan_to_dict(back)["assignments"] == data["assignments"]
    assert plan_to_dict(back)["cost"]["upper"] == pytest.approx(data["cost"]["upper"], rel=1e-12)
    assert validate_plan(back, normalize(sc))["max_violation"] <= 1e-9
