"""Exact points-to-segments EMD under the L1 metric.

Segments are cut at every point's x and y coordinate, so each point sees
each subsegment from one corner of its bounding box.  The L1 cost then
splits into point-to-corner distances (linear in the flow) and the cost of
spreading mass from the corners along the subsegment (quadratic in the
per-corner totals).  The resulting convex program over the transportation
polytope is solved by pairwise Frank-Wolfe, with every linear subproblem a
transportation solve; the Frank-Wolfe gap certifies the optimum.
"""
import logging
import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .discretize import PieceSet
from .flowsolve import solve_transportation
from .lift import assemble_plan

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
MAX_ITER = 50_000
# fill order along a subsegment, leftmost endpoint first (labels 0..3 = X1..X4)
FILL_ORDER = {1: (0, 1, 3, 2), 2: (0, 3, 1, 2)}


class L1Error(ValueError):
    """Input the L1 solver cannot handle."""


@dataclass
class L1Subsegment:
    obj: int
    left: np.ndarray      # leftmost endpoint (lower one if vertical)
    right: np.ndarray
    cls: int              # 1: |slope| <= 1, 2: steeper
    W: float
    H: float
    length: float
    w: float
    h: float
    mass: float
    corners: np.ndarray   # (4, 2): X1..X4 apexes

    def point_at(self, s):
        """Position at arclength ``s`` from the left endpoint."""
        return self.left + (s / self.length) * (self.right - self.left)


@dataclass
class L1Program:
    points: np.ndarray
    weights: np.ndarray
    subsegments: list
    labels: np.ndarray    # (n, J) quadrant index 0..3
    D: np.ndarray         # (n, J) point-to-corner L1 distance
    A: np.ndarray         # (J, 4, 4) quadratic forms of the per-corner totals
    b: np.ndarray         # (J, 4)
    density: float
    l1_length: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.D.shape

    @property
    def demand(self):
        return np.array([q.mass for q in self.subsegments])

    def totals(self, u):
        """Per-subsegment mass received from each quadrant, shape (J, 4)."""
        n, J = self.shape
        x = np.zeros((J, 4))
        np.add.at(x, (np.broadcast_to(np.arange(J), (n, J)), self.labels), u)
        return x

    def objective(self, u):
        x = self.totals(u)
        quad = 0.5 * np.einsum("jk,jkl,jl->", x, self.A, x) + float((self.b * x).sum())
        return float((self.D * u).sum()) + float(quad)

    def gradient(self, u):
        x = self.totals(u)
        g = np.einsum("jkl,jl->jk", self.A, x) + self.b
        return self.D + g[np.arange(self.shape[1])[None, :], self.labels]

    def curvature(self, v):
        x = self.totals(v)
        return float(np.einsum("jk,jkl,jl->", x, self.A, x))


def _cut_nodes(a, b, points):
    """Segment cut at the points' coordinates; cut nodes hit them exactly."""
    ts, snap = [0.0, 1.0], [(-1, 0.0), (-1, 0.0)]
    for k in range(2):
        if b[k] != a[k]:
            t = (points[:, k] - a[k]) / (b[k] - a[k])
            hit = (t > 0) & (t < 1)
            ts.extend(t[hit].tolist())
            snap.extend((k, float(v)) for v in points[hit, k])
    order = np.argsort(ts, kind="stable")
    nodes = []
    for idx in order:
        node = a + ts[idx] * (b - a)
        k, v = snap[idx]
        if k >= 0:
            node[k] = v
        if not nodes or np.abs(node - nodes[-1]).sum() > 0:
            nodes.append(node)
    nodes[-1] = b.copy()
    return nodes


def _subsegment(obj, a, b, density, l1_length):
    if (a[0], a[1]) > (b[0], b[1]):
        a, b = b, a
    W, H = abs(b[0] - a[0]), abs(b[1] - a[1])
    length = W + H if l1_length else math.hypot(W, H)
    corners = np.array([a, [a[0], b[1]], b, [b[0], a[1]]], dtype=float)
    return L1Subsegment(obj, a, b, 1 if H <= W else 2, W, H, length, W / length, H / length,
                        density * length, corners)


def _corner_label(p, q):
    # strips are empty, so comparing with the box middle is round-off safe
    cx = q.left[0] if p[0] <= 0.5 * (q.left[0] + q.right[0]) else q.right[0]
    ylo, yhi = min(q.left[1], q.right[1]), max(q.left[1], q.right[1])
    cy = ylo if p[1] <= 0.5 * (ylo + yhi) else yhi
    for k in (0, 2, 1, 3):
        if q.corners[k, 0] == cx and q.corners[k, 1] == cy:
            return k, cx, cy
    raise AssertionError("corner lookup failed")


def strip_violations(points, sub, tol=1e-12):
    """Points strictly inside the horizontal or vertical strip of ``sub``."""
    lo = np.minimum(sub.left, sub.right)
    hi = np.maximum(sub.left, sub.right)
    inside_x = (points[:, 0] > lo[0] + tol) & (points[:, 0] < hi[0] - tol)
    inside_y = (points[:, 1] > lo[1] + tol) & (points[:, 1] < hi[1] - tol)
    return np.flatnonzero(inside_x | inside_y)


def _quadratic_terms(q, rho):
    A = np.zeros((4, 4))
    b = np.zeros(4)
    s, w, h = 1.0 / rho, q.w, q.h
    A[0, 0] = A[2, 2] = (w + h) * s
    if q.cls == 1:
        # X2 continues after X1, X4 before X3; cost grows by (w - h) per unit
        for i, j in ((0, 1), (2, 3)):
            A[i, j] = A[j, i] = A[j, j] = (w - h) * s
        b[1] = b[3] = q.H
    else:
        for i, j in ((0, 3), (2, 1)):
            A[i, j] = A[j, i] = A[j, j] = (h - w) * s
        b[1] = b[3] = q.W
    return A, b


def build_l1_program(points, weights, segments, density=1.0, l1_length=False):
    """Convex program for moving weighted ``points`` onto ``segments`` under L1.

    ``density`` is mass per unit length.  With ``l1_length`` a segment's
    length (hence its mass) is its L1 extent, and the density is reset so
    the segments carry the points' total weight.
    """
    P = np.asarray(points, dtype=float)
    wts = np.asarray(weights, dtype=float)
    segs = np.asarray(segments, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or segs.ndim != 3 or segs.shape[1:] != (2, 2):
        raise L1Error("the L1 solver needs 2-D points and 2-D segments")
    if l1_length:
        total = float(np.abs(segs[:, 1] - segs[:, 0]).sum())
        density = float(wts.sum()) / total
    subs = []
    for o, (a, b) in enumerate(segs):
        nodes = _cut_nodes(a, b, P)
        for u, v in zip(nodes[:-1], nodes[1:]):
            if np.abs(v - u).sum() > 0:
                subs.append(_subsegment(o, u, v, density, l1_length))
    if not subs:
        raise L1Error("all segments have zero length")
    n, J = len(P), len(subs)
    labels = np.zeros((n, J), dtype=int)
    D = np.zeros((n, J))
    A = np.zeros((J, 4, 4))
    bb = np.zeros((J, 4))
    for j, q in enumerate(subs):
        A[j], bb[j] = _quadratic_terms(q, density)
        for i, p in enumerate(P):
            k, cx, cy = _corner_label(p, q)
            labels[i, j] = k
            D[i, j] = abs(p[0] - cx) + abs(p[1] - cy)
    prog = L1Program(P, wts, subs, labels, D, A, bb, float(density), l1_length)
    log.debug("L1 program: %d points, %d subsegments", n, J)
    return prog


def program_from_scene(scene, l1_length=False):
    """Program for a points/segments scene (either side may be the points)."""
    if scene.metric != "l1":
        raise L1Error(f"the exact solver needs metric 'l1', scene uses {scene.metric!r}")
    if scene.dim != 2:
        raise L1Error(f"the exact solver works in the plane, scene has dimension {scene.dim}")
    P, S = scene.P, scene.S
    swapped = False
    if S.is_points and P.kind == "segments":
        P, S, swapped = S, P, True
    if not (P.is_points and S.kind == "segments"):
        raise L1Error(f"the exact solver handles points vs segments, not {scene.pair_kind}")
    prog = build_l1_program(P.points, P.weights, S.objects, S.density, l1_length)
    prog.meta["swapped"] = swapped
    return prog


def _lmo(prog, G):
    flow = solve_transportation(prog.weights, prog.demand, cost=G)
    V = np.zeros(prog.shape)
    V[flow.rows, flow.cols] = flow.mass
    return V


def _vertex_key(V):
    return np.round(V, 13).tobytes()


def solve_l1_program(prog, tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Minimize the program; returns ``(plan, gap)``.

    ``gap`` is the Frank-Wolfe gap at the returned iterate, an upper bound on
    its distance to the optimum.  The plan's ``meta`` carries the objective,
    iteration count and whether ``gap <= tol * objective`` was reached.
    """
    V0 = _lmo(prog, prog.D)
    verts = {_vertex_key(V0): V0}
    alpha = {_vertex_key(V0): 1.0}
    u = V0.copy()
    gap, it, converged = math.inf, 0, False
    for it in range(1, max_iter + 1):
        G = prog.gradient(u)
        S = _lmo(prog, G)
        gap = max(float((G * (u - S)).sum()), 0.0)
        obj = prog.objective(u)
        if gap <= tol * max(obj, 1e-300) or gap == 0.0:
            converged = True
            break
        # pairwise step: move weight from the worst active vertex to S
        keys = list(alpha)
        vals = [float((G * verts[k]).sum()) for k in keys]
        away = keys[int(np.argmax(vals))]
        Dir = S - verts[away]
        slope = float((G * Dir).sum())
        if slope >= 0:
            break
        curv = prog.curvature(Dir)
        gmax = alpha[away]
        step = gmax if curv <= 0 else min(gmax, -slope / curv)
        u = u + step * Dir
        ks = _vertex_key(S)
        verts.setdefault(ks, S)
        alpha[ks] = alpha.get(ks, 0.0) + step
        alpha[away] -= step
        if alpha[away] <= 1e-15:
            del alpha[away]
            if away != ks:
                verts.pop(away, None)
    u = np.maximum(u, 0.0)
    obj = prog.objective(u)
    if not converged:
        log.warning("Frank-Wolfe stopped after %d iterations with gap %.3g", it, gap)
    plan = reconstruct_plan(prog, u, swapped=prog.meta.get("swapped", False))
    plan.flow_cost = obj
    plan.lower_flow_cost = max(obj - gap, 0.0)
    plan.meta.update(objective=obj, gap=gap, iterations=it, converged=converged,
                     relative_gap=gap / obj if obj > 0 else 0.0,
                     subsegments=len(prog.subsegments), u=u.tolist())
    return plan, gap


def layout(prog, u, orders=None, threshold=0.0):
    """Chunks of every subsegment assigned to points.

    Yields (point, subsegment, start, end, mass) with arclengths from the
    left endpoint.  ``orders`` overrides the quadrant fill order per
    subsegment; the default is the optimal one.
    """
    for j, q in enumerate(prog.subsegments):
        order = FILL_ORDER[q.cls] if orders is None else orders[j]
        s = 0.0
        for k in order:
            for i in np.flatnonzero(prog.labels[:, j] == k):
                m = float(u[i, j])
                if m <= threshold:
                    continue
                ds = min(m / prog.density, q.length - s)
                yield i, j, s, s + ds, m
                s += ds


def layout_cost(prog, u, orders=None):
    """Exact L1 cost of the chunk layout.

    Within one quadrant both coordinate offsets are monotone along the
    chunk, so the cost is the mass times the distance to the chunk midpoint.
    """
    total = 0.0
    for i, j, s0, s1, m in layout(prog, u, orders):
        q = prog.subsegments[j]
        mid = q.point_at(0.5 * (s0 + s1))
        total += m * float(np.abs(prog.points[i] - mid).sum())
    return total


def reconstruct_plan(prog, u, threshold=1e-15, swapped=False):
    """Transport plan with one subsegment piece per (point, chunk).

    With ``swapped`` the segments are the scene's P side.
    """
    rows, a, b, obj, mass = [], [], [], [], []
    for i, j, s0, s1, m in layout(prog, u, threshold=threshold):
        q = prog.subsegments[j]
        rows.append(i)
        a.append(q.point_at(s0))
        b.append(q.point_at(s1))
        obj.append(q.obj)
        mass.append(m)
    pp = PieceSet.from_points("S" if swapped else "P", prog.points, prog.weights)
    ps = PieceSet("P" if swapped else "S", "subsegment", np.array(obj, dtype=int), np.array(a).reshape(-1, 2),
                  np.array(b).reshape(-1, 2), np.array(mass))
    flow = SimpleNamespace(rows=np.array(rows, dtype=int), cols=np.arange(len(rows)),
                           mass=np.array(mass), cost=0.0)
    if swapped:
        flow.rows, flow.cols = flow.cols, flow.rows
        return assemble_plan(flow, ps, pp, metric="l1")
    return assemble_plan(flow, pp, ps, metric="l1")


def solve_scene(scene, tol=DEFAULT_TOL, l1_length=False, max_iter=MAX_ITER):
    """Build and solve the program for ``scene``; costs are in input units."""
    prog = program_from_scene(scene, l1_length)
    plan, gap = solve_l1_program(prog, tol, max_iter)
    plan.meta["layout_cost"] = layout_cost(prog, np.array(plan.meta["u"]))
    return plan, gap, prog
