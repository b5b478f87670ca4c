import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emdgeom.discretize import PieceSet, residual_clearance
from emdgeom.prematch import AFFINE, greedy_match_grid, greedy_match_segments, grid_cell_size
from emdgeom.scene import normalize

from conftest import random_segments_segments, random_simplex, tightness_scene

UNIT_P = np.array([[[0.0, 0], [1, 0]]])


def test_parallel_at_twice_kappa_unmatched():
    kappa = 0.1
    M = greedy_match_segments(UNIT_P, UNIT_P + [0, 2 * kappa], kappa)
    assert len(M) == 0
    assert M.residual_p.total() == pytest.approx(1.0)
    assert M.residual_s.total() == pytest.approx(1.0)


def test_identical_segments_fully_matched():
    M = greedy_match_segments(UNIT_P, UNIT_P.copy(), 0.05)
    assert M.total_matched_mass == pytest.approx(1.0)
    assert M.cost_upper() == pytest.approx(0.0, abs=1e-12)
    assert M.residual_p.total() == pytest.approx(0.0, abs=1e-12)


def test_tightness_instance_matches_first_pair():
    sc = tightness_scene()
    M = greedy_match_segments(sc.P.objects, sc.S.objects, 1.0)
    # P[0] (y=2) is matched in full with S[0] (y=1) at distance one
    assert M.total_matched_mass == pytest.approx(1.0)
    assert set(M.src.obj.tolist()) == {0} and set(M.dst.obj.tolist()) == {0}
    assert M.cost_upper() == pytest.approx(1.0)


def check_segment_match(M, metric="l2"):
    assert np.all(M.dmax <= M.kappa * (1 + 1e-12))
    t = np.linspace(0, 1, 100)[:, None]
    for k in np.flatnonzero(M.coupling == AFFINE):
        x = M.src.a[k] + t * (M.src.b[k] - M.src.a[k])
        y = M.dst.a[k] + t * (M.dst.b[k] - M.dst.a[k])
        assert np.linalg.norm(x - y, axis=1).max() <= M.kappa + 1e-12


@given(st.integers(0, 10**6), st.sampled_from([0.05, 0.2]))
def test_segment_match_invariants(seed, kappa):
    sc = normalize(random_segments_segments(np.random.default_rng(seed)))
    M = greedy_match_segments(sc.P.objects, sc.S.objects, kappa, "l2", sc.P.density, sc.S.density)
    check_segment_match(M)
    assert M.total_matched_mass + M.residual_p.total() == pytest.approx(1.0, abs=1e-9)
    assert M.total_matched_mass + M.residual_s.total() == pytest.approx(1.0, abs=1e-9)
    assert M.cost_upper() <= kappa * M.total_matched_mass * (1 + 1e-12)
    if M.residual_p.total() > 1e-9 and M.residual_s.total() > 1e-9:
        rp = M.residual_p
        rs = M.residual_s
        keep_p, keep_s = rp.measure > 1e-12, rs.measure > 1e-12
        sub = lambda ps, k: PieceSet(ps.side, ps.kind, ps.obj[k], ps.a[k], ps.b[k], ps.measure[k])
        assert residual_clearance(sub(rp, keep_p), sub(rs, keep_s)) >= M.clearance * (1 - 1e-9)
        # stretches are located numerically, so clearance can miss kappa by round-off
        assert M.clearance >= kappa * (1 - 1e-5)


TRI = np.array([[[0.0, 0], [1, 0], [0, 2]]])


def test_identical_triangles_overlap_removed():
    M = greedy_match_grid(TRI, TRI.copy(), 0.05)
    assert M.total_matched_mass == pytest.approx(1.0)
    assert M.cost_upper() == pytest.approx(0.0, abs=1e-12)


def test_distant_triangles_unmatched():
    M = greedy_match_grid(TRI, TRI + 10.0, 0.05)
    assert len(M) == 0 or M.total_matched_mass == pytest.approx(0.0, abs=1e-12)


def cell_keys(ps, g):
    return np.floor(0.5 * (ps.a + ps.b) / g + 1e-9).astype(int)


def test_half_cell_offset_greedy_is_maximal():
    g = 0.1
    M = greedy_match_grid(TRI, TRI + [g / 2, 0], g)
    rp, rs = M.residual_p, M.residual_s
    # occupancies recomputed from the residual pieces: nothing left that a
    # cell or a neighbouring cell could still cancel
    kp = cell_keys(rp, g)[rp.measure > 1e-12]
    ks = cell_keys(rs, g)[rs.measure > 1e-12]
    for k in kp:
        assert not np.any(np.abs(ks - k).max(axis=1) <= 1)
    assert M.total_matched_mass + rp.total() == pytest.approx(1.0, abs=1e-9)
    assert M.total_matched_mass + rs.total() == pytest.approx(1.0, abs=1e-9)
    assert np.all(M.dmax <= M.kappa * (1 + 1e-12))
    assert M.kappa == pytest.approx(math.hypot(2 * g, 2 * g))


@given(st.integers(0, 10**6))
def test_grid_match_invariants(seed):
    rng = np.random.default_rng(seed)
    P = np.array([random_simplex(rng, 2, min_measure=0.05)])
    S = P + rng.uniform(-0.05, 0.05, 2)
    delta = 0.25
    g = grid_cell_size(delta, 1, 1, 2)
    M = greedy_match_grid(P, S, g)
    area = M.total_matched_mass + M.residual_p.total()
    assert area == pytest.approx(M.total_matched_mass + M.residual_s.total(), abs=1e-9)
    assert np.all(M.dmax <= M.kappa * (1 + 1e-12))
    assert M.cost_upper() <= M.kappa * M.total_matched_mass * (1 + 1e-12)
    assert M.clearance == pytest.approx(g)
    rp, rs = M.residual_p, M.residual_s
    keep_p, keep_s = rp.measure > 1e-12, rs.measure > 1e-12
    if keep_p.any() and keep_s.any():
        sub = lambda ps, k: PieceSet(ps.side, ps.kind, ps.obj[k], ps.a[k], ps.b[k], ps.measure[k])
        assert residual_clearance(sub(rp, keep_p), sub(rs, keep_s)) >= g * (1 - 1e-9)
