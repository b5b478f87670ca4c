"""Brute-force reference EMD by fine uniform discretization of both sides.

Every side is cut into small equal-size pieces (equal-length chunks for
segments, clipped grid cells for triangles/simplices), each piece is
collapsed to its centroid, and the resulting point sets are matched
exactly.  Moving any piece's mass to its centroid changes the EMD by at most
the piece's diameter times its mass, which gives the reported bracket.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .discretize import _classify, _grid_cells, _halfspace_arrays, draw_samples
from .flowsolve import solve_transportation
from .geometry import _norm, pairwise
from .polytope import ConvexPolytope

MAX_NODES = 50_000


class OracleError(ValueError):
    """Resolution too fine for the brute-force solve."""


@dataclass
class OracleResult:
    cost: float
    resolution: int
    error_bound: float
    nodes: tuple = (0, 0)
    certified: bool = True

    @property
    def bracket(self):
        return self.cost - self.error_bound, self.cost + self.error_bound


def _segment_nodes(side, resolution, metric):
    pos, mass, diam = [], [], 0.0
    for (a, b) in side.objects:
        L = float(np.linalg.norm(b - a))
        k = max(1, math.ceil(L * resolution))
        t = (np.arange(k) + 0.5) / k
        pos.append(a + t[:, None] * (b - a))
        mass.append(np.full(k, side.density * L / k))
        diam = max(diam, float(_norm((b - a) / k, metric)))
    return np.concatenate(pos), np.concatenate(mass), diam


def _cell_nodes(side, resolution, metric, max_nodes, samples=10**6, seed=0):
    objs = side.objects
    d = objs.shape[2]
    h = 1.0 / resolution
    diag = float(_norm(np.full(d, h), metric))
    Z, O = _grid_cells(objs, h)
    if len(Z) > 4 * max_nodes:
        raise OracleError(f"resolution {resolution} needs more than {max_nodes} nodes; lower it")
    if d > 3:
        # no exact clipping above d = 3: cell masses from uniform samples
        X, obj, w = draw_samples(objs, samples, seed)
        keys = np.floor(X / h).astype(np.int64)
        uniq, inv = np.unique(np.c_[obj, keys], axis=0, return_inverse=True)
        inv = inv.ravel()
        mass = np.bincount(inv, weights=w) * side.density
        pos = np.stack([np.bincount(inv, weights=w * X[:, k]) for k in range(d)], 1)
        pos /= np.bincount(inv, weights=w)[:, None]
        return pos, mass, diag
    N, c = _halfspace_arrays(objs)
    lo = Z * h
    status = _classify(lo, h, O, N, c, objs.min(axis=1), objs.max(axis=1))
    inside = status == 2
    pos = [lo[inside] + 0.5 * h]
    mass = [np.full(int(inside.sum()), side.density * h ** d)]
    polys = [ConvexPolytope.from_simplex(V) for V in objs]
    bp, bm = [], []
    for k in np.flatnonzero(status == 1):
        part = polys[O[k]].clip_box(lo[k], lo[k] + h)
        if part.is_empty():
            continue
        vol = part.volume()
        if vol <= 0:
            continue
        bp.append(part.centroid())
        bm.append(side.density * vol)
    if bp:
        pos.append(np.array(bp))
        mass.append(np.array(bm))
    return np.concatenate(pos), np.concatenate(mass), diag


def side_nodes(side, resolution, metric="l2", max_nodes=MAX_NODES, seed=0):
    """(positions, masses, max piece diameter) of one discretized side."""
    if side.is_points:
        return side.points.astype(float), side.weights.astype(float), 0.0
    if side.kind == "segments":
        return _segment_nodes(side, resolution, metric)
    return _cell_nodes(side, resolution, metric, max_nodes, seed=seed)


def oracle_emd(scene, resolution, max_nodes=MAX_NODES, seed=0):
    """Reference EMD of ``scene`` in its own units.

    The true EMD lies in ``cost ± error_bound`` where ``error_bound`` is twice
    the largest piece diameter times the total mass.
    """
    if resolution < 1:
        raise OracleError("resolution must be at least 1")
    X, a, dx = side_nodes(scene.P, resolution, scene.metric, max_nodes, seed)
    Y, b, dy = side_nodes(scene.S, resolution, scene.metric, max_nodes, seed + 1)
    if len(a) + len(b) > max_nodes:
        raise OracleError(f"resolution {resolution} gives {len(a) + len(b)} nodes, "
                          f"above the guard of {max_nodes}")
    # tiny imbalance from clipping round-off goes to the larger side's weights
    b = b * (a.sum() / b.sum())
    flow = solve_transportation(a, b, supply_pos=X, demand_pos=Y, metric=scene.metric)
    total = float(a.sum())
    bound = 2.0 * max(dx, dy) * total
    if bound == 0.0:
        bound = 1e-12 * max(1.0, abs(flow.cost))
    f = scene.cost_factor if scene.normalized else 1.0
    return OracleResult(flow.cost * f, int(resolution), bound * f, (len(a), len(b)), flow.certified)


def enumerate_basic_solutions(supply, demand, cost):
    """Minimum transportation cost by trying every basis (tiny instances only).

    Each choice of m+n-1 arcs whose equality system has a unique solution
    defines a basic solution; the best non-negative one is optimal.
    Returns (cost, flow matrix).
    """
    a = np.asarray(supply, dtype=float)
    b = np.asarray(demand, dtype=float)
    C = np.asarray(cost, dtype=float)
    m, n = C.shape
    if m * n > 20:
        raise OracleError("basis enumeration is limited to 20 arcs")
    arcs = [(i, j) for i in range(m) for j in range(n)]
    rhs = np.concatenate([a, b])
    best, best_x = math.inf, None
    for basis in itertools.combinations(range(m * n), m + n - 1):
        A = np.zeros((m + n, m + n - 1))
        for col, arc in enumerate(basis):
            i, j = arcs[arc]
            A[i, col] = 1.0
            A[m + j, col] = 1.0
        if np.linalg.matrix_rank(A) < m + n - 1:
            continue
        x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.abs(A @ x - rhs).max() > 1e-10 or x.min() < -1e-12:
            continue
        val = sum(C[arcs[arc]] * x[col] for col, arc in enumerate(basis))
        if val < best:
            best = val
            F = np.zeros((m, n))
            for col, arc in enumerate(basis):
                F[arcs[arc]] = max(x[col], 0.0)
            best_x = F
    return float(best), best_x


def point_set_emd(X, a, Y, b, metric="l2"):
    """Exact EMD between two weighted point sets (dense matrix solve)."""
    return solve_transportation(a, b, cost=pairwise(X, Y, metric)).cost
