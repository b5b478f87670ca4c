import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from emdgeom.geometry import simplex_measure
from emdgeom.scene import parse_scene

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def points_side(P, w):
    return {"kind": "points", "items": [{"pos": list(map(float, p)), "mass": float(x)}
                                        for p, x in zip(P, w)]}


def make_scene(P, S, metric="l2", dim=2, rebalance=False):
    return parse_scene({"metric": metric, "dimension": dim, "P": P, "S": S}, rebalance=rebalance)


def seg_length(segs):
    segs = np.asarray(segs, dtype=float)
    return float(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1).sum())


def random_simplex(rng, d, k=None, min_measure=0.02):
    k = d if k is None else k
    while True:
        V = rng.uniform(0, 1, (k + 1, d))
        if simplex_measure(V) > min_measure:
            return V


def random_points_segments(rng, nmax=4, mmax=4, metric="l2"):
    n, m = int(rng.integers(1, nmax + 1)), int(rng.integers(1, mmax + 1))
    P = rng.uniform(0, 1, (n, 2))
    segs = np.array([random_simplex(rng, 2, 1, 0.05) for _ in range(m)])
    w = rng.uniform(0.2, 1, n)
    w *= seg_length(segs) / w.sum()
    return make_scene(points_side(P, w), {"kind": "segments", "items": segs.tolist()}, metric)


def random_points_triangles(rng, nmax=4, mmax=3):
    n, m = int(rng.integers(1, nmax + 1)), int(rng.integers(1, mmax + 1))
    P = rng.uniform(0, 1, (n, 2))
    tris = np.array([random_simplex(rng, 2) for _ in range(m)])
    w = rng.uniform(0.2, 1, n)
    w *= sum(simplex_measure(V) for V in tris) / w.sum()
    return make_scene(points_side(P, w), {"kind": "triangles", "items": tris.tolist()})


def random_segments_segments(rng, nmax=3, mmax=3):
    n, m = int(rng.integers(1, nmax + 1)), int(rng.integers(1, mmax + 1))
    P = np.array([random_simplex(rng, 2, 1, 0.05) for _ in range(n)])
    S = np.array([random_simplex(rng, 2, 1, 0.05) for _ in range(m)])
    # equal total length: stretch every S segment about its first endpoint
    S[:, 1] = S[:, 0] + (S[:, 1] - S[:, 0]) * seg_length(P) / seg_length(S)
    return make_scene({"kind": "segments", "items": P.tolist()},
                      {"kind": "segments", "items": S.tolist()})


def random_tets(rng, nmax=2, mmax=2):
    n, m = int(rng.integers(1, nmax + 1)), int(rng.integers(1, mmax + 1))
    P = np.array([random_simplex(rng, 3) for _ in range(n)])
    S = np.array([random_simplex(rng, 3) for _ in range(m)])
    vp = sum(simplex_measure(V) for V in P)
    vs = sum(simplex_measure(V) for V in S)
    c = S.mean(axis=(0, 1))
    S = c + (S - c) * (vp / vs) ** (1.0 / 3.0)
    return make_scene({"kind": "simplices", "items": P.tolist()},
                      {"kind": "simplices", "items": S.tolist()}, dim=3)


def tightness_scene():
    return make_scene({"kind": "segments", "items": [[[0, 2], [1, 2]], [[0, 0], [1, 0]]]},
                      {"kind": "segments", "items": [[[0, 1], [1, 1]], [[0, 3], [1, 3]]]})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
