import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emdgeom.pipeline import PipelineConfig, run
from emdgeom.scene import SceneError, load_scene, normalize, parse_scene, scene_to_dict

from conftest import make_scene, points_side, random_points_segments


def seg_scene(P, S):
    return make_scene({"kind": "segments", "items": P}, {"kind": "segments", "items": S})


def test_identical_point_sets():
    side = points_side([[0, 0], [1, 2]], [1, 3])
    sc = make_scene(side, side)
    assert np.array_equal(sc.P.points, sc.S.points)
    assert np.array_equal(sc.P.weights, sc.S.weights)


def test_zero_length_segment_rejected():
    with pytest.raises(SceneError, match="degenerate object at index 1"):
        seg_scene([[[0, 0], [1, 0]], [[2, 2], [2, 2]]], [[[0, 1], [2, 1]]])


def test_unbalanced_segments():
    with pytest.raises(SceneError, match="unbalanced mass"):
        seg_scene([[[0, 0], [2, 0]]], [[[0, 1], [3, 1]]])


def test_rebalance_points():
    sc = make_scene(points_side([[0, 0]], [1.0]), {"kind": "segments", "items": [[[0, 1], [3, 1]]]},
                    rebalance=True)
    assert sc.P.total_mass() == pytest.approx(3.0)


@pytest.mark.parametrize("data,field", [
    ({"dimension": 2, "S": {}}, "P"),
    ({"dimension": 0, "P": {}, "S": {}}, "dimension"),
    ({"metric": "linf", "dimension": 2, "P": {}, "S": {}}, "metric"),
    ({"dimension": 2, "P": {"kind": "blobs", "items": [1]}, "S": {}}, "P.kind"),
    ({"dimension": 2, "P": {"kind": "points", "items": [{"pos": [0]}]}, "S": {}}, "P.items[0]"),
])
def test_malformed_names_field(data, field):
    with pytest.raises(SceneError, match=field.replace("[", r"\[").replace("]", r"\]")):
        parse_scene(data)


def test_load_from_file_and_text(tmp_path):
    data = {"metric": "l2", "dimension": 2, "P": points_side([[0, 0]], [1]),
            "S": points_side([[1, 1]], [1])}
    f = tmp_path / "s.json"
    f.write_text(json.dumps(data))
    a, b = load_scene(str(f)), load_scene(json.dumps(data))
    assert scene_to_dict(a) == scene_to_dict(b)
    with pytest.raises(SceneError, match="invalid JSON"):
        load_scene("{not json")


def test_normalize_segment_length_four():
    sc = normalize(seg_scene([[[0, 0], [4, 0]]], [[[0, 1], [4, 1]]]))
    assert sc.scale_factor == pytest.approx(4.0)
    assert sc.S.objects[0, 1, 0] == pytest.approx(1.0)
    assert sc.S.total_mass() == pytest.approx(1.0)


def test_normalize_triangle_area_four():
    tri = [[[0, 0], [4, 0], [0, 2]]]
    sc = normalize(make_scene({"kind": "triangles", "items": tri},
                              {"kind": "triangles", "items": tri}))
    assert sc.scale_factor == pytest.approx(2.0)
    assert sc.P.objects[0, 1, 0] == pytest.approx(2.0)


def test_normalize_tet_volume_eight():
    # volume 8: edge lengths scaled so that volume / 6 * 48 = 8
    tet = (np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]) * 48 ** (1 / 3)).tolist()
    sc = normalize(make_scene({"kind": "simplices", "items": [tet]},
                              {"kind": "simplices", "items": [tet]}, dim=3))
    assert sc.scale_factor == pytest.approx(2.0)
    assert sc.P.total_mass() == pytest.approx(1.0)


@given(st.integers(0, 10**6))
def test_normalize_idempotent(seed):
    sc = normalize(random_points_segments(np.random.default_rng(seed)))
    again = normalize(sc)
    assert np.allclose(again.S.objects, sc.S.objects, atol=1e-12)
    assert np.allclose(again.P.weights, sc.P.weights, atol=1e-12)
    assert again.cost_factor == pytest.approx(sc.cost_factor, abs=1e-12)


@given(st.integers(0, 10**6), st.floats(0.2, 5))
def test_cost_scales_with_factor(seed, lam):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 1, (2, 2))
    seg = rng.uniform(0, 1, (1, 2, 2))
    L = float(np.linalg.norm(seg[0, 1] - seg[0, 0]))
    base = make_scene(points_side(P, [L / 2, L / 2]), {"kind": "segments", "items": seg.tolist()})
    big = make_scene(points_side(P * lam, [lam * L / 2] * 2),
                     {"kind": "segments", "items": (seg * lam).tolist()})
    cfg = PipelineConfig(epsilon=0.4, validate=False)
    a, b = run(base, cfg), run(big, cfg)
    # the normalized problems coincide, so input-unit costs scale by lam^2
    assert b.costs()[1] == pytest.approx(a.costs()[1] * lam ** 2, rel=1e-9)
    assert a.costs()[1] == pytest.approx(a.cost_factor * a.cost_estimate, rel=1e-12)
