import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emdgeom.flowsolve import DiscreteTransportProblem, FlowError, solve_problem, solve_transportation
from emdgeom.geometry import pairwise
from emdgeom.oracle import enumerate_basic_solutions


def check_certificate(flow, C, a, b):
    # potentials are dual feasible and tight on every used arc
    red = C - flow.pi[:, None] - flow.sigma[None, :]
    scale = max(np.abs(C).max(), 1e-300)
    assert red.min() >= -1e-7 * scale
    assert np.abs(red[flow.rows, flow.cols]).max(initial=0.0) <= 1e-7 * scale
    assert flow.pi @ a + flow.sigma @ b == pytest.approx(flow.cost, abs=1e-9 * max(1, scale))


def check_flow(flow, C, a, b):
    F = np.zeros_like(C)
    np.add.at(F, (flow.rows, flow.cols), flow.mass)
    assert np.all(flow.mass > 0)
    assert np.allclose(F.sum(1), a, atol=1e-9) and np.allclose(F.sum(0), b, atol=1e-9)
    assert len(flow.mass) <= len(a) + len(b) - 1
    assert flow.cost == pytest.approx(float((F * C).sum()), abs=1e-9)


def test_identity_matching():
    X = np.array([[0.0, 0], [1, 0]])
    f = solve_transportation([0.5, 0.5], [0.5, 0.5], supply_pos=X, demand_pos=X)
    assert f.cost == pytest.approx(0.0, abs=1e-15)
    assert sorted(f.entries) == [(0, 0, 0.5), (1, 1, 0.5)]


def test_forced_single_arc():
    p = DiscreteTransportProblem(np.array([[0.0, 0]]), np.array([1.0]), np.array([[3.0, 4]]),
                                 np.array([1.0]))
    f = solve_problem(p)
    assert f.cost == pytest.approx(5.0)
    assert f.certified


def test_two_by_two_matches_enumeration():
    X = np.array([[0.0, 0], [1, 0]])
    Y = np.array([[0.2, 0.5], [1.4, -0.3]])
    a, b = np.array([0.3, 0.7]), np.array([0.5, 0.5])
    C = pairwise(X, Y)
    f = solve_transportation(a, b, cost=C)
    want, _ = enumerate_basic_solutions(a, b, C)
    assert f.cost == pytest.approx(want, abs=1e-9)
    check_certificate(f, C, a, b)
    check_flow(f, C, a, b)


def test_unbalanced_rejected():
    with pytest.raises(FlowError, match="unbalanced"):
        solve_transportation([1.0], [0.9], cost=np.ones((1, 1)))


def test_tiny_imbalance_absorbed():
    f = solve_transportation([0.5, 0.5], [1.0 + 1e-12], cost=np.array([[1.0], [2.0]]))
    assert f.cost == pytest.approx(1.5)


def test_nonpositive_mass_rejected():
    with pytest.raises(FlowError, match="positive"):
        solve_transportation([1.0, 0.0], [1.0], cost=np.ones((2, 1)))


def instance(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 5, 2)
    a = rng.uniform(0.1, 1, m)
    b = rng.uniform(0.1, 1, n)
    b *= a.sum() / b.sum()
    X, Y = rng.uniform(-1, 1, (m, 2)), rng.uniform(-1, 1, (n, 2))
    return a, b, X, Y


@given(st.integers(0, 10**6), st.sampled_from(["l1", "l2"]))
def test_matches_vertex_enumeration(seed, metric):
    a, b, X, Y = instance(seed)
    C = pairwise(X, Y, metric)
    f = solve_transportation(a, b, cost=C)
    want, _ = enumerate_basic_solutions(a, b, C)
    assert f.cost == pytest.approx(want, abs=1e-9)
    check_certificate(f, C, a, b)
    check_flow(f, C, a, b)


@given(st.integers(0, 10**6), st.floats(0.1, 10), st.sampled_from(["l1", "l2"]))
def test_scale_equivariance(seed, lam, metric):
    a, b, X, Y = instance(seed)
    f = solve_transportation(a, b, supply_pos=X, demand_pos=Y, metric=metric)
    g = solve_transportation(a, b, supply_pos=lam * X, demand_pos=lam * Y, metric=metric)
    assert g.cost == pytest.approx(lam * f.cost, rel=1e-9, abs=1e-12)
    C = pairwise(X, Y, metric)
    # the optimal value is unchanged; the flow itself may differ only on ties
    F = np.zeros_like(C)
    np.add.at(F, (g.rows, g.cols), g.mass)
    assert float((F * C).sum()) == pytest.approx(f.cost, abs=1e-9)


def test_on_demand_costs_match_dense(monkeypatch):
    import emdgeom.flowsolve as fs
    rng = np.random.default_rng(7)
    X, Y = rng.uniform(size=(60, 2)), rng.uniform(size=(50, 2))
    a, b = np.full(60, 1 / 60), np.full(50, 1 / 50)
    dense = solve_transportation(a, b, supply_pos=X, demand_pos=Y)
    monkeypatch.setattr(fs, "DENSE_LIMIT", 0)
    lazy = solve_transportation(a, b, supply_pos=X, demand_pos=Y)
    assert lazy.cost == pytest.approx(dense.cost, abs=1e-12)
    assert lazy.certified


def test_warm_start_same_optimum():
    rng = np.random.default_rng(3)
    X, Y = rng.uniform(size=(4, 2)), rng.uniform(size=(300, 2))
    a, b = rng.uniform(0.5, 1, 4), rng.uniform(0.5, 1, 300)
    b *= a.sum() / b.sum()
    cold = solve_transportation(a, b, supply_pos=X, demand_pos=Y, warm_start=False)
    warm = solve_transportation(a, b, supply_pos=X, demand_pos=Y, warm_start=True)
    assert warm.cost == pytest.approx(cold.cost, abs=1e-12)
