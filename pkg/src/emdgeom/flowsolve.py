"""Exact balanced transportation solver with a dual optimality certificate."""
import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import dist, metric_code, pairwise

log = logging.getLogger(__name__)

BALANCE_TOL = 1e-9
CERT_TOL = 1e-7
DENSE_LIMIT = 10**7          # above this many arcs costs are evaluated on demand
WARM_SMALL_SIDE = 16
# running tally of solves and how many passed the certificate check
STATS = {"solves": 0, "certified": 0}


class FlowError(RuntimeError):
    """Unbalanced input or a solution that fails its optimality certificate."""


@dataclass
class DiscreteTransportProblem:
    supply_pos: np.ndarray
    supply: np.ndarray
    demand_pos: np.ndarray
    demand: np.ndarray
    metric: str = "l2"


@dataclass
class DiscreteFlow:
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    cost: float
    pi: np.ndarray           # supply potentials
    sigma: np.ndarray        # demand potentials, pi_i + sigma_j <= cost_ij
    iterations: int
    certified: bool
    max_slack_violation: float
    dual_gap: float

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))


def _rebalance(a, b):
    sa, sb = a.sum(), b.sum()
    gap = sa - sb
    if abs(gap) > BALANCE_TOL * max(sa, sb, 1e-300):
        raise FlowError(f"unbalanced instance: supplies {sa:.15g} vs demands {sb:.15g}")
    b = b.copy()
    b[np.argmax(b)] += gap
    return a, b


def _lse(Z, axis):
    zmax = Z.max(axis=axis, keepdims=True)
    return (zmax + np.log(np.exp(Z - zmax).sum(axis=axis, keepdims=True))).squeeze(axis)


def semidual_potentials(a, b, C, eps_final=1e-7, max_newton=30):
    """Approximate dual potentials of the small side (rows of ``C``).

    Maximizes the entropically smoothed semi-dual with Newton steps while
    annealing the smoothing.  Used only to seed the simplex method.
    """
    s = len(a)
    u = np.zeros(s)
    if s == 1:
        return u
    scale = max(float(C.max()), 1e-300)
    Cn = C / scale
    eps = 0.1
    while True:
        for _ in range(max_newton):
            Z = (u[:, None] - Cn) / eps
            lse = _lse(Z, 0)
            P = np.exp(Z - lse)
            F = a @ u - eps * (b @ lse)
            Pb = P * b
            grad = a - Pb.sum(axis=1)
            if np.abs(grad).max() < 1e-12:
                break
            H = (np.diag(Pb.sum(axis=1)) - Pb @ P.T) / eps
            H = H[1:, 1:] + 1e-12 * np.eye(s - 1)
            step = np.zeros(s)
            try:
                step[1:] = np.linalg.solve(H, grad[1:])
            except np.linalg.LinAlgError:
                step[1:] = grad[1:]
            t = 1.0
            while t > 1e-8:
                un = u + t * step
                Fn = a @ un - eps * (b @ _lse((un[:, None] - Cn) / eps, 0))
                if Fn >= F - 1e-15:
                    break
                t *= 0.5
            u = un
        if eps <= eps_final:
            break
        eps = max(eps / 4.0, eps_final)
    return u * scale


def _warm_order(a, b, C):
    """Arc priority order (row-major arc ids) from approximate reduced costs."""
    m, n = C.shape
    if m <= n:
        u = semidual_potentials(a, b, C)
        R = C - u[:, None]
        R -= R.min(axis=0, keepdims=True)
    else:
        v = semidual_potentials(b, a, C.T)
        R = C - v[None, :]
        R -= R.min(axis=1, keepdims=True)
    return np.argsort(R.ravel(), kind="stable")


def solve_transportation(supply, demand, cost=None, supply_pos=None, demand_pos=None,
                         metric="l2", warm_start=None, verify=True):
    """Optimal flow between weighted supplies and demands.

    Costs come from a dense matrix ``cost`` or from point coordinates
    ``supply_pos``/``demand_pos`` under ``metric``.  The result carries dual
    potentials and is checked for complementary slackness (relative slack
    ``CERT_TOL``); a failed check raises ``FlowError``.
    """
    a = np.asarray(supply, dtype=float)
    b = np.asarray(demand, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or not len(a) or not len(b):
        raise FlowError("supplies and demands must be non-empty 1-D arrays")
    if np.any(a <= 0) or np.any(b <= 0):
        raise FlowError("all masses must be positive")
    a, b = _rebalance(a, b)
    m, n = len(a), len(b)
    code = metric_code(metric)
    dense = cost is not None or m * n <= DENSE_LIMIT
    if cost is None and dense:
        cost = pairwise(supply_pos, demand_pos, metric)
    if cost is not None:
        cost = np.ascontiguousarray(cost, dtype=float)
        if cost.shape != (m, n):
            raise FlowError(f"cost matrix shape {cost.shape} does not match {m}x{n}")

        def C_rows(i0, i1):
            return cost[i0:i1]
    else:
        X = np.ascontiguousarray(supply_pos, dtype=float)
        Y = np.ascontiguousarray(demand_pos, dtype=float)

        def C_rows(i0, i1):
            return pairwise(X[i0:i1], Y, metric)

    if warm_start is None:
        warm_start = min(m, n) <= WARM_SMALL_SIDE and max(m, n) >= 64 and cost is not None
    order = _warm_order(a, b, cost) if warm_start else None
    if cost is not None:
        out = _kernels.network_simplex(a, b, cost=cost, order=order)
    else:
        out = _kernels.network_simplex(a, b, xs=X, ys=Y, metric=code, order=order)
    rows, cols, mass, u, v, iters, art = out
    if iters < 0:
        raise FlowError("network simplex failed: unbounded pivot")
    if art > BALANCE_TOL:
        raise FlowError(f"infeasible: {art:.3g} mass left on artificial arcs")

    if cost is not None:
        arc_cost = cost[rows, cols]
    else:
        arc_cost = dist(X[rows], Y[cols], metric)
    total = float(mass @ arc_cost)

    pi, sigma = -u, v
    cmax = 0.0
    worst = 0.0
    for i0 in range(0, m, 2048):
        Cb = C_rows(i0, min(m, i0 + 2048))
        cmax = max(cmax, float(np.abs(Cb).max()))
        worst = min(worst, float((Cb - pi[i0:i0 + 2048, None] - sigma[None, :]).min()))
    tight = float(np.abs(arc_cost - pi[rows] - sigma[cols]).max()) if len(rows) else 0.0
    scale = max(cmax, 1e-300)
    violation = max(-worst, tight) / scale
    dual = float(a @ pi + b @ sigma)
    gap = (total - dual) / max(scale, abs(total))
    certified = violation <= CERT_TOL and abs(gap) <= CERT_TOL
    STATS["solves"] += 1
    STATS["certified"] += int(certified)
    if verify:
        F_row = np.bincount(rows, weights=mass, minlength=m)
        F_col = np.bincount(cols, weights=mass, minlength=n)
        marg = max(float(np.abs(F_row - a).max()), float(np.abs(F_col - b).max()))
        if marg > BALANCE_TOL * max(1.0, a.sum()):
            raise FlowError(f"flow violates marginals by {marg:.3g}")
        if not certified:
            raise FlowError(f"optimality certificate failed: slack violation {violation:.3g}, gap {gap:.3g}")
    log.debug("transport %dx%d solved in %d pivots, cost %.12g", m, n, iters, total)
    return DiscreteFlow(rows, cols, mass, total, pi, sigma, int(iters), certified,
                        violation, gap)


def solve_problem(problem):
    """Solve a ``DiscreteTransportProblem``."""
    return solve_transportation(problem.supply, problem.demand,
                                supply_pos=problem.supply_pos, demand_pos=problem.demand_pos,
                                metric=problem.metric)
