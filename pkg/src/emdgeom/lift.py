"""Continuous transport plans from discrete flows: assembly, cost brackets,
quadrature and feasibility validation."""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import PieceSet
from .geometry import (_norm, box_box_extremes, point_box_extremes,
                       point_segment_extremes, segment_pair_extremes)
from .polytope import gauss_legendre01
from .prematch import AFFINE, IDENTITY, PRODUCT, GreedyMatch

DEFAULT_ORDER = 8
_CHUNK = 4096


class PlanError(ValueError):
    """Flow and pieces do not fit together."""


@dataclass
class Assignment:
    source: tuple
    target: tuple
    mass: float
    dmin: float
    dmax: float
    cost_quadrature: float


@dataclass
class TransportPlan:
    """Piece-to-piece assignments plus greedy pre-matched pairs.

    Costs are in normalized scene units; multiply by ``cost_factor`` for
    input units (``costs()`` does this).
    """
    pieces_p: PieceSet
    pieces_s: PieceSet
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    dmin: np.ndarray
    dmax: np.ndarray
    quad: np.ndarray
    matched: GreedyMatch = None
    matched_quad: np.ndarray = None
    flow_cost: float = 0.0
    lower_flow_cost: float = 0.0
    metric: str = "l2"
    cost_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def cost_upper(self):
        extra = self.matched.cost_upper() if self.matched is not None else 0.0
        return float(self.mass @ self.dmax) + extra

    @property
    def cost_lower(self):
        extra = self.matched.cost_lower() if self.matched is not None else 0.0
        return float(self.lower_flow_cost) + extra

    @property
    def cost_estimate(self):
        extra = float(self.matched_quad.sum()) if self.matched_quad is not None else 0.0
        return float(self.quad.sum()) + extra

    @property
    def residual_upper(self):
        return float(self.mass @ self.dmax)

    def costs(self):
        """(lower, estimate, upper) in input units."""
        f = self.cost_factor
        return f * self.cost_lower, f * self.cost_estimate, f * self.cost_upper

    def __len__(self):
        return len(self.mass) + (len(self.matched) if self.matched is not None else 0)

    def assignments(self):
        out = []
        for k in range(len(self.mass)):
            i, j = int(self.rows[k]), int(self.cols[k])
            out.append(Assignment(_describe(self.pieces_p, i), _describe(self.pieces_s, j),
                                  float(self.mass[k]), float(self.dmin[k]), float(self.dmax[k]),
                                  float(self.quad[k])))
        if self.matched is not None:
            M = self.matched
            for k in range(len(M)):
                out.append(Assignment(_describe(M.src, k), _describe(M.dst, k), float(M.mass[k]),
                                      float(M.dmin[k]), float(M.dmax[k]), float(self.matched_quad[k])))
        return out


def _describe(ps, k):
    return (ps.side, int(ps.obj[k]), ps.kind, ps.a[k].tolist(), ps.b[k].tolist())


# ----------------------------------------------------------------- extremes

def paired_extremes(X, rows, Y, cols, metric="l2"):
    """Closest/farthest distance for the aligned piece pairs (X[rows], Y[cols])."""
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    if X.kind != "point" and Y.kind == "point":
        return paired_extremes(Y, cols, X, rows, metric)
    kx, ky = X.kind, Y.kind
    if kx == "point" and ky == "point":
        dd = _norm(X.a[rows] - Y.a[cols], metric)
        return dd, dd.copy()
    if kx == "point" and ky == "subsegment":
        return point_segment_extremes(X.a[rows], Y.a[cols], Y.b[cols], metric)
    if kx == "point" and ky == "cell":
        return point_box_extremes(X.a[rows], Y.a[cols], Y.b[cols], metric)
    if kx == "cell" and ky == "cell":
        return box_box_extremes(X.a[rows], X.b[rows], Y.a[cols], Y.b[cols], metric)
    if kx == "subsegment" and ky == "subsegment":
        dmin = np.empty(len(rows))
        dmax = np.empty(len(rows))
        for k, (i, j) in enumerate(zip(rows, cols)):
            a, b = segment_pair_extremes(X.a[i:i + 1], X.b[i:i + 1], Y.a[j:j + 1], Y.b[j:j + 1], metric)
            dmin[k], dmax[k] = a[0, 0], b[0, 0]
        return dmin, dmax
    raise PlanError(f"no extreme-distance rule for {kx} vs {ky}")


# --------------------------------------------------------------- quadrature

def _box_rule(d, order):
    t, w = gauss_legendre01(order)
    T = np.stack(np.meshgrid(*([t] * d), indexing="ij"), -1).reshape(-1, d)
    W = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
    return T, W


_NODE_CAP = 64
_BATCH = 2_000_000       # distance evaluations per vectorized batch


def _compress(x, w, lo, hi, cap):
    """Merge nodes into at most ``cap`` bins of the box [lo, hi] (weighted centroids)."""
    if len(w) <= cap:
        return x, w
    d = x.shape[1]
    k = max(1, int(cap ** (1.0 / d)))
    span = np.where(hi > lo, hi - lo, 1.0)
    z = np.clip(((x - lo) / span * k).astype(np.int64), 0, k - 1)
    key = np.ravel_multi_index(z.T, (k,) * d)
    uniq, inv = np.unique(key, return_inverse=True)
    W = np.bincount(inv, weights=w)
    X = np.stack([np.bincount(inv, weights=w * x[:, j]) for j in range(d)], 1) / W[:, None]
    return X, W


def _carrier_rule(ps, k, order, cap=None):
    """Nodes and normalized weights (summing to 1) of piece ``k``'s mass."""
    d = ps.dim
    if ps.kind == "point":
        return ps.a[k:k + 1], np.ones(1)
    if ps.kind == "subsegment":
        t, w = gauss_legendre01(order)
        return ps.a[k] + t[:, None] * (ps.b[k] - ps.a[k]), w
    if ps.samples is not None:
        x, w = ps.sample_slice(k)
    elif k in ps.regions:
        nodes, weights = [], []
        for poly, dens in ps.regions[k]:
            xq, wq = poly.quadrature(order)
            nodes.append(xq)
            weights.append(wq * dens)
        x = np.concatenate(nodes)
        w = np.concatenate(weights)
    else:
        T, W = _box_rule(d, order)
        return ps.a[k] + T * (ps.b[k] - ps.a[k]), W
    if cap is not None:
        x, w = _compress(x, w, ps.a[k], ps.b[k], cap)
    return x, w / w.sum()


def _padded_rules(ps, idx, order, cap):
    """Stacked carrier rules for pieces ``idx``: nodes (K, c, d), weights (K, c)."""
    rules = [_carrier_rule(ps, int(k), order, cap) for k in idx]
    c = max(len(r[1]) for r in rules)
    N = np.zeros((len(idx), c, ps.dim))
    W = np.zeros((len(idx), c))
    for i, (x, w) in enumerate(rules):
        N[i, :len(w)] = x
        N[i, len(w):] = x[0]
        W[i, :len(w)] = w
    return N, W


def _batched_mean_distance(NX, WX, NY, WY, metric):
    """Mean distance between aligned node sets: NX (K, a, d) vs NY (K, b, d)."""
    K, ca, _ = NX.shape
    cb = NY.shape[1]
    out = np.empty(K)
    step = max(1, _BATCH // max(1, ca * cb))
    for s0 in range(0, K, step):
        sl = slice(s0, s0 + step)
        D = _norm(NX[sl][:, :, None, :] - NY[sl][:, None, :, :], metric)
        out[sl] = np.einsum("ki,kij,kj->k", WX[sl], D, WY[sl])
    return out


def _mean_distance(Xs, ws, Ys, wy, metric):
    D = _norm(Xs[:, None, :] - Ys[None, :, :], metric)
    return float(ws @ D @ wy)


def _product_order(d, order, both):
    if not both:
        return order
    q = order
    while q > 2 and q ** (2 * d) > 65536:
        q -= 1
    return q


def _assignment_quadrature(X, rows, Y, cols, mass, metric, order):
    if Y.kind == "point" and X.kind != "point":
        return _assignment_quadrature(Y, cols, X, rows, mass, metric, order)
    out = np.empty(len(rows))
    both = X.kind != "point" and Y.kind != "point"
    q = _product_order(X.dim, order, both)
    # fast path: points against plain (unclipped, sample-free) cells or subsegments
    if X.kind == "point" and Y.samples is None and Y.kind in ("cell", "subsegment"):
        if Y.kind == "subsegment":
            t, W = gauss_legendre01(order)
            T = t[:, None]
        else:
            T, W = _box_rule(Y.dim, order)
        plain = np.ones(len(cols), dtype=bool)
        if Y.regions:
            plain = ~np.isin(cols, np.fromiter(Y.regions.keys(), dtype=int))
        fast = np.flatnonzero(plain)
        for c0 in range(0, len(fast), _CHUNK):
            ks = fast[c0:c0 + _CHUNK]
            r, c = rows[ks], cols[ks]
            nodes = Y.a[c][:, None, :] + T[None] * (Y.b[c] - Y.a[c])[:, None, :]
            D = _norm(nodes - X.a[r][:, None, :], metric)
            out[ks] = mass[ks] * (D @ W)
        todo = np.flatnonzero(~plain)
    else:
        todo = np.arange(len(rows))
    if not len(todo):
        return out
    ux, ix = np.unique(rows[todo], return_inverse=True)
    uy, iy = np.unique(cols[todo], return_inverse=True)
    cap = _NODE_CAP if both else 4 * _NODE_CAP
    NX, WX = _padded_rules(X, ux, q, cap)
    NY, WY = _padded_rules(Y, uy, q, cap)
    # distance tensors are built per batch from the shared per-piece rules
    res = np.empty(len(todo))
    step = max(1, _BATCH // max(1, NX.shape[1] * NY.shape[1]))
    for s0 in range(0, len(todo), step):
        a_, b_ = ix[s0:s0 + step], iy[s0:s0 + step]
        res[s0:s0 + step] = _batched_mean_distance(NX[a_], WX[a_], NY[b_], WY[b_], metric)
    out[todo] = mass[todo] * res
    return out


def _matched_quadrature(M, metric, order):
    out = np.zeros(len(M))
    t, w = gauss_legendre01(order)
    aff = np.flatnonzero(M.coupling == AFFINE)
    if len(aff):
        u = (M.src.a - M.dst.a)[aff]
        v = (M.src.b - M.dst.b)[aff]
        P = (1 - t)[None, :, None] * u[:, None, :] + t[None, :, None] * v[:, None, :]
        out[aff] = M.mass[aff] * (_norm(P, metric) @ w)
    prod = np.flatnonzero(M.coupling == PRODUCT)
    if len(prod):
        d = M.src.dim
        T, W = _box_rule(d, _product_order(d, order, True))
        # the mean distance between two boxes only depends on their shapes and
        # relative offset; grid pairs repeat a handful of those
        hp = (M.src.b - M.src.a)[prod]
        hs = (M.dst.b - M.dst.a)[prod]
        off = (M.dst.a - M.src.a)[prod]
        scale = max(float(hp.max()), 1e-300)
        key = np.round(np.c_[hp, hs, off] / scale, 9)
        uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        ks = prod[first]
        xs = M.src.a[ks][:, None, :] + T[None] * (M.src.b - M.src.a)[ks][:, None, :]
        ys = M.dst.a[ks][:, None, :] + T[None] * (M.dst.b - M.dst.a)[ks][:, None, :]
        Wk = np.broadcast_to(W, (len(ks), len(W)))
        per_unit = _batched_mean_distance(xs, Wk, ys, Wk, metric)
        out[prod] = M.mass[prod] * per_unit[inv.ravel()]
    return np.clip(out, M.mass * M.dmin, M.mass * M.dmax)


# ----------------------------------------------------------------- assembly

def assemble_plan(flow, pieces_p, pieces_s, matched=None, metric="l2", order=DEFAULT_ORDER,
                  lower_flow_cost=None, cost_factor=1.0):
    """Turn a flow between piece representatives into a transport plan.

    Each positive flow entry becomes one assignment spreading its mass
    uniformly over the source and target pieces; matched pairs are kept as
    they are.  ``lower_flow_cost`` is the optimum of the same transport
    problem under closest-point costs (defaults to the flow's cost).
    """
    rows = np.asarray(flow.rows, dtype=int)
    cols = np.asarray(flow.cols, dtype=int)
    if len(rows) and (rows.max() >= len(pieces_p) or cols.max() >= len(pieces_s)):
        raise PlanError("flow refers to pieces that do not exist")
    keep = flow.mass > 0
    rows, cols, mass = rows[keep], cols[keep], np.asarray(flow.mass)[keep]
    dmin, dmax = paired_extremes(pieces_p, rows, pieces_s, cols, metric)
    quad = _assignment_quadrature(pieces_p, rows, pieces_s, cols, mass, metric, order)
    quad = np.clip(quad, mass * dmin, mass * dmax)
    mq = _matched_quadrature(matched, metric, order) if matched is not None else None
    return TransportPlan(pieces_p, pieces_s, rows, cols, mass, dmin, dmax, quad, matched, mq,
                         float(flow.cost),
                         float(flow.cost if lower_flow_cost is None else lower_flow_cost),
                         metric, cost_factor)


def plan_cost_quadrature(plan, order=DEFAULT_ORDER):
    """Quadrature estimate of the plan's cost (normalized units) at ``order``."""
    q = _assignment_quadrature(plan.pieces_p, plan.rows, plan.pieces_s, plan.cols, plan.mass,
                               plan.metric, order)
    q = np.clip(q, plan.mass * plan.dmin, plan.mass * plan.dmax)
    total = float(q.sum())
    if plan.matched is not None:
        total += float(_matched_quadrature(plan.matched, plan.metric, order).sum())
    return total


# --------------------------------------------------------------- validation

def validate_plan(plan, scene):
    """Check that each object sends/receives exactly its mass.

    Returns a report with per-object and per-piece violations (normalized
    mass units) and the overall maximum.
    """
    out_p = np.bincount(plan.pieces_p.obj[plan.rows], weights=plan.mass,
                        minlength=scene.P.count) if len(plan.rows) else np.zeros(scene.P.count)
    in_s = np.bincount(plan.pieces_s.obj[plan.cols], weights=plan.mass,
                       minlength=scene.S.count) if len(plan.cols) else np.zeros(scene.S.count)
    out_p = out_p[:scene.P.count].astype(float)
    in_s = in_s[:scene.S.count].astype(float)
    M = plan.matched
    if M is not None and len(M):
        out_p += np.bincount(M.src.obj, weights=M.mass, minlength=scene.P.count)[:scene.P.count]
        in_s += np.bincount(M.dst.obj, weights=M.mass, minlength=scene.S.count)[:scene.S.count]
    want_p = scene.P.measures()
    want_s = scene.S.measures()
    viol_p = np.abs(out_p - want_p)
    viol_s = np.abs(in_s - want_s)
    # piece level: flow margins against piece masses
    rp = np.bincount(plan.rows, weights=plan.mass, minlength=len(plan.pieces_p))
    cs = np.bincount(plan.cols, weights=plan.mass, minlength=len(plan.pieces_s))
    piece_p = float(np.abs(rp - plan.pieces_p.measure).max()) if len(plan.pieces_p) else 0.0
    piece_s = float(np.abs(cs - plan.pieces_s.measure).max()) if len(plan.pieces_s) else 0.0
    neg = int((plan.mass <= 0).sum()) + (int((M.mass <= 0).sum()) if M is not None else 0)
    worst_obj = max(float(viol_p.max()), float(viol_s.max()))
    report = {
        "object_violation_P": viol_p.tolist(),
        "object_violation_S": viol_s.tolist(),
        "piece_violation": max(piece_p, piece_s),
        "nonpositive_masses": neg,
        "max_violation": max(worst_obj, piece_p, piece_s) + (math.inf if neg else 0.0),
    }
    worst = int(np.argmax(np.concatenate([viol_p, viol_s])))
    report["worst_object"] = ("P", worst) if worst < len(viol_p) else ("S", worst - len(viol_p))
    return report


# ------------------------------------------------------------------- export

def _piece_json(ps, k):
    side, obj, kind, a, b = _describe(ps, k)
    return {"side": side, "object": obj, "kind": kind, "a": a, "b": b}


def plan_to_dict(plan):
    """JSON-ready plan: assignments (input-unit masses are normalized) plus costs."""
    rows = []
    for k in range(len(plan.mass)):
        rows.append({"source": _piece_json(plan.pieces_p, int(plan.rows[k])),
                     "target": _piece_json(plan.pieces_s, int(plan.cols[k])),
                     "mass": float(plan.mass[k]), "dmin": float(plan.dmin[k]),
                     "dmax": float(plan.dmax[k]), "cost_quadrature": float(plan.quad[k]),
                     "matched": False})
    M = plan.matched
    if M is not None:
        for k in range(len(M)):
            rows.append({"source": _piece_json(M.src, k), "target": _piece_json(M.dst, k),
                         "mass": float(M.mass[k]), "dmin": float(M.dmin[k]),
                         "dmax": float(M.dmax[k]), "cost_quadrature": float(plan.matched_quad[k]),
                         "matched": True, "coupling": ["identity", "affine", "product"][int(M.coupling[k])]})
    lower, est, upper = plan.costs()
    return {"metric": plan.metric, "cost_factor": plan.cost_factor,
            "normalized": bool(plan.meta.get("normalized", False)),
            "cost": {"lower": lower, "estimate": est, "upper": upper},
            "assignments": rows}


def plan_from_dict(data, scene=None):
    """Rebuild a plan from its JSON form (enough for validation and rendering)."""
    flow_rows = [r for r in data["assignments"] if not r.get("matched")]
    match_rows = [r for r in data["assignments"] if r.get("matched")]

    def pieces(items, side):
        if not items:
            return PieceSet.empty(side, "point", 1 if scene is None else scene.dim)
        kind = items[0]["kind"]
        return PieceSet(side, kind, np.array([it["object"] for it in items], dtype=int),
                        np.array([it["a"] for it in items], dtype=float),
                        np.array([it["b"] for it in items], dtype=float),
                        np.zeros(len(items)))

    src = pieces([r["source"] for r in flow_rows], "P")
    dst = pieces([r["target"] for r in flow_rows], "S")
    mass = np.array([r["mass"] for r in flow_rows], dtype=float)
    idx = np.arange(len(flow_rows))
    # one piece per assignment; piece masses equal the assignment masses
    src.measure = mass.copy()
    dst.measure = mass.copy()
    matched = None
    if match_rows:
        ms = pieces([r["source"] for r in match_rows], "P")
        md = pieces([r["target"] for r in match_rows], "S")
        mm = np.array([r["mass"] for r in match_rows], dtype=float)
        coup = {"identity": IDENTITY, "affine": AFFINE, "product": PRODUCT}
        matched = GreedyMatch(ms, md, mm, np.array([r["dmin"] for r in match_rows]),
                              np.array([r["dmax"] for r in match_rows]),
                              np.array([coup[r.get("coupling", "product")] for r in match_rows]),
                              None, None, 0.0, 0.0)
    plan = TransportPlan(src, dst, idx, idx, mass,
                         np.array([r["dmin"] for r in flow_rows], dtype=float),
                         np.array([r["dmax"] for r in flow_rows], dtype=float),
                         np.array([r["cost_quadrature"] for r in flow_rows], dtype=float),
                         matched,
                         np.array([r["cost_quadrature"] for r in match_rows], dtype=float)
                         if match_rows else None,
                         metric=data.get("metric", "l2"), cost_factor=data.get("cost_factor", 1.0))
    plan.meta["normalized"] = bool(data.get("normalized", False))
    return plan


def dump_plan(plan, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan), fh, indent=1, sort_keys=True)
        fh.write("\n")
