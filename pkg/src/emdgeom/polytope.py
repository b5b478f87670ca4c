"""Convex polygons/polyhedra with half-space clipping, plus quadrature and
uniform sampling on simplices.

Only dimensions 2 and 3 are represented exactly; higher dimensions go through
the Monte Carlo path (``sample_simplex``).
"""
import math
from functools import lru_cache

import numpy as np

_TOL = 1e-12


def _facet_halfspaces(V):
    """Outward half-spaces ``n . x <= c`` bounding the full-dimensional simplex V."""
    d = V.shape[1]
    hs = []
    for i in range(d + 1):
        F = np.delete(V, i, axis=0)
        E = F[1:] - F[0]
        # null vector of the facet's edge matrix
        _, _, vt = np.linalg.svd(E if E.size else np.zeros((1, d)))
        nrm = vt[-1]
        if nrm @ (V[i] - F[0]) > 0:
            nrm = -nrm
        hs.append((nrm, float(nrm @ F[0])))
    return hs


class ConvexPolytope:
    """Bounded convex polygon (d=2) or polyhedron (d=3).

    2D: ``verts`` is an ordered (k, 2) loop.  3D: ``faces`` is a list of
    ordered vertex loops.  ``halfspaces`` keeps an H-description (possibly
    redundant) used for intersections and set differences.
    """

    def __init__(self, dim, verts=None, faces=None, halfspaces=()):
        self.dim = dim
        self.halfspaces = list(halfspaces)
        if dim == 2:
            self.verts = np.zeros((0, 2)) if verts is None else np.asarray(verts, float)
            self.faces = None
        elif dim == 3:
            self.faces = [np.asarray(f, float) for f in (faces or [])]
            self.verts = (np.unique(np.concatenate(self.faces), axis=0)
                          if self.faces else np.zeros((0, 3)))
        else:
            raise ValueError("exact polytopes are limited to d = 2 or 3")

    @classmethod
    def from_simplex(cls, V):
        V = np.asarray(V, dtype=float)
        d = V.shape[1]
        if V.shape[0] != d + 1:
            raise ValueError("need d+1 vertices for a full-dimensional simplex")
        hs = _facet_halfspaces(V)
        if d == 2:
            area2 = (V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[1, 1] - V[0, 1]) * (V[2, 0] - V[0, 0])
            verts = V if area2 > 0 else V[::-1]
            return cls(2, verts=verts, halfspaces=hs)
        if d == 3:
            faces = [V[[1, 2, 3]], V[[0, 2, 3]], V[[0, 1, 3]], V[[0, 1, 2]]]
            return cls(3, faces=faces, halfspaces=hs)
        raise ValueError("exact polytopes are limited to d = 2 or 3")

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        d = lo.size
        hs = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            hs.append((e, float(hi[k])))
            hs.append((-e, float(-lo[k])))
        if d == 2:
            v = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
            return cls(2, verts=v, halfspaces=hs)
        if d == 3:
            c = np.array([[x, y, z] for z in (lo[2], hi[2]) for y in (lo[1], hi[1])
                          for x in (lo[0], hi[0])])
            loops = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]]
            return cls(3, faces=[c[f] for f in loops], halfspaces=hs)
        raise ValueError("exact polytopes are limited to d = 2 or 3")

    # ------------------------------------------------------------ clipping
    def is_empty(self):
        return len(self.verts) < self.dim + 1

    def clip(self, normal, offset, record=True):
        """Intersection with the half-space ``normal . x <= offset``."""
        normal = np.asarray(normal, dtype=float)
        hs = self.halfspaces + [(normal, float(offset))] if record else self.halfspaces
        if self.is_empty():
            return ConvexPolytope(self.dim, halfspaces=hs)
        s = self.verts @ normal - offset
        scale = max(1.0, float(np.abs(self.verts).max()))
        tol = _TOL * scale * max(1.0, float(np.abs(normal).max()))
        if np.all(s <= tol):
            return ConvexPolytope(self.dim, verts=self.verts, faces=self.faces, halfspaces=hs)
        if np.all(s >= -tol):
            return ConvexPolytope(self.dim, halfspaces=hs)
        if self.dim == 2:
            out = _clip_loop(self.verts, normal, offset, tol)[0]
            return ConvexPolytope(2, verts=out if len(out) >= 3 else None, halfspaces=hs)
        faces = []
        cap = []
        for f in self.faces:
            loop, on = _clip_loop(f, normal, offset, tol)
            if len(loop) >= 3:
                faces.append(loop)
            cap.extend(on)
        cap = _order_planar(np.array(cap), normal) if len(cap) >= 3 else None
        if cap is not None and len(cap) >= 3:
            faces.append(cap)
        return ConvexPolytope(3, faces=faces, halfspaces=hs)

    def clip_box(self, lo, hi):
        out = self
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            out = out.clip(e, hi[k]).clip(-e, -lo[k])
            if out.is_empty():
                break
        return out

    def intersect(self, other):
        out = self
        for nrm, off in other.halfspaces:
            out = out.clip(nrm, off)
            if out.is_empty():
                break
        return out

    def difference(self, other):
        """``self`` minus ``other`` as a list of interior-disjoint convex pieces."""
        pieces = []
        rest = self
        for nrm, off in other.halfspaces:
            outside = rest.clip(-nrm, -off)
            if not outside.is_empty() and outside.volume() > 0:
                pieces.append(outside)
            rest = rest.clip(nrm, off)
            if rest.is_empty():
                break
        return pieces

    # ------------------------------------------------------------ measures
    def simplices(self):
        """Triangulation as a list of (d+1, d) vertex arrays."""
        if self.is_empty():
            return []
        if self.dim == 2:
            v = self.verts
            return [np.array([v[0], v[i], v[i + 1]]) for i in range(1, len(v) - 1)]
        c = self.verts.mean(axis=0)
        out = []
        for f in self.faces:
            for i in range(1, len(f) - 1):
                out.append(np.array([c, f[0], f[i], f[i + 1]]))
        return out

    def volume(self):
        if self.is_empty():
            return 0.0
        if self.dim == 2:
            x, y = self.verts[:, 0], self.verts[:, 1]
            return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))
        tot = 0.0
        for S in self.simplices():
            tot += abs(np.linalg.det(S[1:] - S[0])) / 6.0
        return tot

    def centroid(self):
        tot = 0.0
        acc = np.zeros(self.dim)
        for S in self.simplices():
            vol = abs(np.linalg.det(S[1:] - S[0])) / math.factorial(self.dim)
            tot += vol
            acc += vol * S.mean(axis=0)
        return acc / tot if tot > 0 else self.verts.mean(axis=0)

    def bbox(self):
        return self.verts.min(axis=0), self.verts.max(axis=0)

    def quadrature(self, order):
        """Nodes and weights integrating over the polytope (weights sum to volume)."""
        nodes, weights = [], []
        for S in self.simplices():
            x, w = simplex_quadrature(S, order)
            nodes.append(x)
            weights.append(w)
        if not nodes:
            return np.zeros((0, self.dim)), np.zeros(0)
        return np.concatenate(nodes), np.concatenate(weights)


def _clip_loop(loop, normal, offset, tol):
    """Sutherland-Hodgman against one half-space.  Returns the clipped loop and
    the points lying on the cutting plane."""
    s = loop @ normal - offset
    out = []
    on = []
    k = len(loop)
    for i in range(k):
        p, q = loop[i], loop[(i + 1) % k]
        sp, sq = s[i], s[(i + 1) % k]
        if sp <= tol:
            out.append(p)
            if sp >= -tol:
                on.append(p)
        if (sp < -tol and sq > tol) or (sp > tol and sq < -tol):
            x = p + (sp / (sp - sq)) * (q - p)
            out.append(x)
            on.append(x)
    return (np.array(out) if out else np.zeros((0, loop.shape[1]))), on


def _order_planar(pts, normal):
    """Order coplanar points by angle around their mean; drop duplicates."""
    c = pts.mean(axis=0)
    n = normal / np.linalg.norm(normal)
    a = np.eye(3)[np.argmin(np.abs(n))]
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    rel = pts - c
    ang = np.arctan2(rel @ e2, rel @ e1)
    pts = pts[np.argsort(ang, kind="stable")]
    keep = [pts[0]]
    scale = max(1.0, float(np.abs(pts).max()))
    for p in pts[1:]:
        if np.abs(p - keep[-1]).max() > 1e-12 * scale:
            keep.append(p)
    if len(keep) > 1 and np.abs(keep[0] - keep[-1]).max() <= 1e-12 * scale:
        keep.pop()
    return np.array(keep)


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=None)
def gauss_legendre01(order):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _collapsed_rule(k, order):
    """Collapsed-coordinate rule on the unit k-simplex in barycentric form.

    Returns (lambdas (q, k), weights (q,)) with weights summing to 1/k!.
    """
    t, w = gauss_legendre01(order)
    grids = np.meshgrid(*([t] * k), indexing="ij")
    wgrids = np.meshgrid(*([w] * k), indexing="ij")
    T = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    lam = np.empty_like(T)
    rest = np.ones(len(T))
    jac = np.ones(len(T))
    for i in range(k):
        lam[:, i] = rest * T[:, i]
        jac *= (1.0 - T[:, i]) ** (k - 1 - i) if i < k - 1 else 1.0
        rest = rest * (1.0 - T[:, i])
    return lam, W * jac


def simplex_quadrature(V, order):
    """Nodes and weights on the simplex with vertices ``V`` (k+1, d).

    Weights are positive and sum to the simplex's k-measure.
    """
    from .geometry import simplex_measure

    V = np.asarray(V, dtype=float)
    k = V.shape[0] - 1
    lam, w = _collapsed_rule(k, order)
    nodes = V[0] + lam @ (V[1:] - V[0])
    vol = simplex_measure(V)
    return nodes, w * (vol * math.factorial(k))


def segment_quadrature(a, b, order):
    t, w = gauss_legendre01(order)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return a + t[:, None] * (b - a), w * float(np.linalg.norm(b - a))


def sample_simplex(V, count, rng):
    """``count`` uniform samples inside the simplex with vertices ``V``."""
    V = np.asarray(V, dtype=float)
    lam = rng.dirichlet(np.ones(V.shape[0]), size=count)
    return lam @ V
