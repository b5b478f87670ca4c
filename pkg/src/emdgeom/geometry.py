"""Distances, extreme distances, measures and clipping in R^d (d <= 8)."""
import math

import numpy as np

from . import _kernels

MAX_DIM = 8
METRICS = ("l1", "l2")


def metric_code(metric):
    """Map ``"l1"``/``"l2"`` (or 1/2) to the integer code used by the kernels."""
    if metric in ("l1", "L1", 1):
        return 1
    if metric in ("l2", "L2", 2):
        return 2
    raise ValueError(f"unknown metric {metric!r}")


def _norm(v, metric):
    v = np.asarray(v, dtype=float)
    if metric_code(metric) == 1:
        return np.abs(v).sum(axis=-1)
    return np.sqrt((v * v).sum(axis=-1))


def as_vec(p, d=None):
    v = np.asarray(p, dtype=float)
    if v.ndim != 1:
        raise ValueError("a point must be a 1-D coordinate array")
    if not np.all(np.isfinite(v)):
        raise ValueError("coordinates must be finite")
    if not 1 <= v.size <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {v.size}")
    if d is not None and v.size != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {v.size}")
    return v


def dist(p, q, metric="l2"):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    return _norm(p - q, metric)


def pairwise(X, Y, metric="l2"):
    """Distance matrix between the rows of ``X`` and ``Y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return _norm(X[:, None, :] - Y[None, :, :], metric)


# ---------------------------------------------------------------- extremes

def point_segment_extremes(p, a, b, metric="l2"):
    """Closest and farthest distance from ``p`` to segment ``ab``.

    All arguments broadcast over leading axes, so many points against many
    segments can be evaluated at once.
    """
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    u = b - a
    r = p - a
    if metric_code(metric) == 2:
        uu = (u * u).sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(uu > 0, (r * u).sum(axis=-1) / uu, 0.0)
        t = np.clip(t, 0.0, 1.0)
        dmin = _norm(r - t[..., None] * u, 2)
    else:
        # convex piecewise linear in t: minimum at an endpoint or a breakpoint
        with np.errstate(invalid="ignore", divide="ignore"):
            tb = np.where(u != 0, r / np.where(u != 0, u, 1.0), 0.0)
        shape = np.broadcast_shapes(r.shape, u.shape)
        cand = np.concatenate(
            [np.zeros(shape[:-1] + (1,)), np.ones(shape[:-1] + (1,)),
             np.clip(np.broadcast_to(tb, shape), 0.0, 1.0)], axis=-1)
        pts = a[..., None, :] + cand[..., :, None] * u[..., None, :]
        dmin = np.abs(pts - p[..., None, :]).sum(axis=-1).min(axis=-1)
    dmax = np.maximum(_norm(p - a, metric), _norm(p - b, metric))
    return dmin, dmax


def point_box_extremes(p, lo, hi, metric="l2"):
    """Closest and farthest distance from ``p`` to the solid box [lo, hi]."""
    p, lo, hi = (np.asarray(x, dtype=float) for x in (p, lo, hi))
    gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    far = np.maximum(np.abs(p - lo), np.abs(p - hi))
    return _norm(gap, metric), _norm(far, metric)


def box_box_extremes(lo1, hi1, lo2, hi2, metric="l2"):
    """Closest and farthest distance between two solid boxes (broadcasting)."""
    lo1, hi1, lo2, hi2 = (np.asarray(x, dtype=float) for x in (lo1, hi1, lo2, hi2))
    gap = np.maximum(np.maximum(lo2 - hi1, lo1 - hi2), 0.0)
    far = np.maximum(hi2 - lo1, hi1 - lo2)
    return _norm(gap, metric), _norm(far, metric)


def segment_segment_extremes(u, v, metric="l2"):
    """Closest and farthest distance between segments ``u=(a, b)`` and ``v``."""
    dmin, dmax = segment_pair_extremes([u[0]], [u[1]], [v[0]], [v[1]], metric)
    return float(dmin[0, 0]), float(dmax[0, 0])


def segment_pair_extremes(A0, A1, B0, B1, metric="l2"):
    """Extreme distances for all pairs between two lists of segments."""
    A0, A1, B0, B1 = (np.ascontiguousarray(np.atleast_2d(x), dtype=float)
                      for x in (A0, A1, B0, B1))
    return _kernels.segment_pair_extremes(A0, A1, B0, B1, metric_code(metric))


# ---------------------------------------------------------------- measures

def simplex_measure(vertices):
    """k-dimensional measure of a k-simplex given as (k+1, d) vertices."""
    V = np.asarray(vertices, dtype=float)
    k = V.shape[0] - 1
    E = V[1:] - V[0]
    gram = E @ E.T
    det = np.linalg.det(gram) if k > 0 else 1.0
    if k == 0:
        return 1.0
    vol = math.sqrt(max(det, 0.0)) / math.factorial(k)
    scale = max(float(np.abs(E).max()), 1e-300) ** k
    if vol <= 1e-12 * scale:
        raise ValueError("degenerate simplex")
    return vol


def segment_length(a, b):
    return float(np.linalg.norm(np.asarray(b, float) - np.asarray(a, float)))


def clip_segment_interval(a, b, lo, hi):
    """Parameter interval [t0, t1] of segment ``ab`` inside the box, or None."""
    a, b, lo, hi = (np.asarray(x, dtype=float) for x in (a, b, lo, hi))
    t0, t1 = 0.0, 1.0
    for k in range(a.size):
        u = b[k] - a[k]
        if u == 0.0:
            if a[k] < lo[k] or a[k] > hi[k]:
                return None
            continue
        s0 = (lo[k] - a[k]) / u
        s1 = (hi[k] - a[k]) / u
        if s0 > s1:
            s0, s1 = s1, s0
        t0 = max(t0, s0)
        t1 = min(t1, s1)
        if t0 >= t1:
            return None
    return t0, t1


def clip_segment_box(a, b, lo, hi):
    """Euclidean length of segment ``ab`` inside the box [lo, hi]."""
    iv = clip_segment_interval(a, b, lo, hi)
    if iv is None:
        return 0.0
    return (iv[1] - iv[0]) * segment_length(a, b)


def clip_simplex_box(vertices, lo, hi, method="exact", samples=10**6, seed=0):
    """Measure of a simplex inside an axis-aligned box.

    ``method="exact"`` clips with half-spaces (d <= 3); ``method="mc"`` counts
    uniform samples drawn inside the simplex and returns
    ``(estimate, three_sigma)``.
    """
    from . import polytope

    V = np.asarray(vertices, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if method == "mc":
        pts = polytope.sample_simplex(V, samples, np.random.default_rng(seed))
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        vol = simplex_measure(V)
        frac = inside.mean()
        return vol * frac, 3.0 * vol * math.sqrt(frac * (1.0 - frac) / samples)
    poly = polytope.ConvexPolytope.from_simplex(V).clip_box(lo, hi)
    return poly.volume()
