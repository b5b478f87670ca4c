"""Adaptive subdivision of segments and simplices into pieces.

Every piece that comes out of here satisfies, against each entity of the
opposite side, either the cutoff rule (it lies entirely within ``cutoff`` of
that entity) or the distance-ratio rule (farthest / closest <= 1 + delta).
Pieces are carried as flat arrays (``PieceSet``) so that the stopping checks
run vectorized, one subdivision level at a time.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (_norm, box_box_extremes, pairwise,
                       point_box_extremes, point_segment_extremes,
                       segment_pair_extremes)
from .polytope import ConvexPolytope, _facet_halfspaces, sample_simplex

log = logging.getLogger(__name__)

FLOOR = 1e-12
DEFAULT_MAX_PIECES = 2_000_000


class SubdivisionError(RuntimeError):
    """Subdivision hit its size floor or piece budget."""


@dataclass
class PieceSet:
    """Flat collection of pieces from one side.

    ``kind`` is ``"point"``, ``"subsegment"`` or ``"cell"``.  ``a``/``b`` are
    the two endpoints of a subsegment, the low/high corners of a cell, or the
    position twice for a point.  ``regions`` maps a cell piece index to its
    clipped carrier as (convex polytope, mass density) parts (missing: the
    full cell at uniform density);
    ``samples`` holds (points, weights, offsets) for Monte Carlo cells.
    """
    side: str
    kind: str
    obj: np.ndarray
    a: np.ndarray
    b: np.ndarray
    measure: np.ndarray
    regions: dict = field(default_factory=dict)
    samples: tuple = None

    def __len__(self):
        return len(self.measure)

    @property
    def dim(self):
        return self.a.shape[1]

    @property
    def rep(self):
        return 0.5 * (self.a + self.b)

    def diameter(self, metric="l2"):
        return _norm(self.b - self.a, metric)

    def total(self):
        return float(self.measure.sum())

    def per_object(self, count):
        return np.bincount(self.obj, weights=self.measure, minlength=count)

    def sample_slice(self, k):
        X, w, off = self.samples
        return X[off[k]:off[k + 1]], w[off[k]:off[k + 1]]

    @classmethod
    def from_points(cls, side, points, weights):
        P = np.asarray(points, dtype=float)
        return cls(side, "point", np.arange(len(P)), P.copy(), P.copy(),
                   np.asarray(weights, dtype=float).copy())

    @classmethod
    def empty(cls, side, kind, d):
        z = np.zeros((0, d))
        return cls(side, kind, np.zeros(0, dtype=int), z, z.copy(), np.zeros(0))


@dataclass
class SubdivisionReport:
    piece_count: int
    min_piece_size: float
    cutoff: float
    ratio: float
    levels: int = 0
    mc_three_sigma: float = 0.0

    def as_dict(self):
        return {"piece_count": self.piece_count, "min_piece_size": self.min_piece_size,
                "cutoff": self.cutoff, "ratio": self.ratio, "levels": self.levels,
                "mc_three_sigma": self.mc_three_sigma}


def choose_representative(pieces, k):
    """Midpoint of a subsegment, center of a cell, the point itself."""
    return 0.5 * (pieces.a[k] + pieces.b[k])


def piece_extremes(X, Y, metric="l2"):
    """Closest and farthest distances between all pieces of ``X`` and ``Y``."""
    kx, ky = X.kind, Y.kind
    if kx == "point" and ky == "point":
        D = pairwise(X.a, Y.a, metric)
        return D, D.copy()
    if kx != "point" and ky == "point":
        dmin, dmax = piece_extremes(Y, X, metric)
        return dmin.T, dmax.T
    if kx == "point" and ky == "subsegment":
        p = X.a[:, None, :]
        return point_segment_extremes(p, Y.a[None], Y.b[None], metric)
    if kx == "point" and ky == "cell":
        p = X.a[:, None, :]
        return point_box_extremes(p, Y.a[None], Y.b[None], metric)
    if kx == "subsegment" and ky == "subsegment":
        return segment_pair_extremes(X.a, X.b, Y.a, Y.b, metric)
    if kx == "cell" and ky == "cell":
        return box_box_extremes(X.a[:, None], X.b[:, None], Y.a[None], Y.b[None], metric)
    raise ValueError(f"no extreme-distance rule for {kx} vs {ky}")


def _point_rule(dmin, dmax, delta, cutoff):
    """Per (piece, point) stopping predicate: cutoff or ratio."""
    return (dmax <= cutoff) | (dmax <= (1.0 + delta) * dmin)


# ----------------------------------------------------------- segments/points

def subdivide_segments_vs_points(points, segs, delta, metric="l2", cutoff=None,
                                 density=1.0, side="S", max_pieces=DEFAULT_MAX_PIECES):
    """Halve segments until every subsegment passes the point rules.

    ``points`` (n, d); ``segs`` (m, 2, d).  The cutoff defaults to
    ``delta / (n m)``.  Returns ``(PieceSet, SubdivisionReport)`` with pieces
    ordered by segment index, then position along the segment.
    """
    points = np.asarray(points, dtype=float)
    segs = np.asarray(segs, dtype=float)
    n, m = len(points), len(segs)
    if cutoff is None:
        cutoff = delta / (n * m)
    A, B = segs[:, 0], segs[:, 1]
    lengths = np.linalg.norm(B - A, axis=1)
    obj = np.arange(m)
    t0 = np.zeros(m)
    t1 = np.ones(m)
    out_obj, out_t0, out_t1 = [], [], []
    levels = 0
    while len(obj):
        a = A[obj] + t0[:, None] * (B - A)[obj]
        b = A[obj] + t1[:, None] * (B - A)[obj]
        dmin, dmax = point_segment_extremes(points[None], a[:, None], b[:, None], metric)
        done = _point_rule(dmin, dmax, delta, cutoff).all(axis=1)
        out_obj.append(obj[done])
        out_t0.append(t0[done])
        out_t1.append(t1[done])
        obj, t0, t1 = obj[~done], t0[~done], t1[~done]
        if not len(obj):
            break
        if np.any((t1 - t0) * lengths[obj] < FLOOR):
            raise SubdivisionError("subdivision floor reached: subsegment shorter than 1e-12")
        mid = 0.5 * (t0 + t1)
        obj = np.repeat(obj, 2)
        t0, t1 = np.stack([t0, mid], 1).ravel(), np.stack([mid, t1], 1).ravel()
        levels += 1
        if sum(len(o) for o in out_obj) + len(obj) > max_pieces:
            raise SubdivisionError(f"piece budget of {max_pieces} exceeded")
    obj = np.concatenate(out_obj)
    t0 = np.concatenate(out_t0)
    t1 = np.concatenate(out_t1)
    order = np.lexsort((t0, obj))
    obj, t0, t1 = obj[order], t0[order], t1[order]
    a = A[obj] + t0[:, None] * (B - A)[obj]
    b = A[obj] + t1[:, None] * (B - A)[obj]
    measure = density * (t1 - t0) * lengths[obj]
    pieces = PieceSet(side, "subsegment", obj, a, b, measure)
    rep = SubdivisionReport(len(pieces), float(((t1 - t0) * lengths[obj]).min()),
                            float(cutoff), 1.0 + delta, levels)
    return pieces, rep


# ------------------------------------------------------------ cells/simplices

def _halfspace_arrays(objects):
    """Stacked facet half-spaces: normals (m, k, d), offsets (m, k)."""
    N, c = [], []
    for V in objects:
        hs = _facet_halfspaces(V)
        N.append([h[0] for h in hs])
        c.append([h[1] for h in hs])
    return np.array(N), np.array(c)


def _classify(lo, h, objs, normals, offsets, vmin, vmax):
    """Status of (cell, object) pairs: 0 outside, 1 boundary, 2 inside.

    Outside uses separating axes (coordinate axes and facet normals), which
    is conservative in d >= 3: a cell reported as boundary may still miss
    the object and is then dropped after clipping.
    """
    Nn = normals[objs]                      # (K, f, d)
    cc = offsets[objs]                      # (K, f)
    center = lo + 0.5 * h
    proj = np.einsum("kfd,kd->kf", Nn, center)
    spread = 0.5 * h * np.abs(Nn).sum(axis=2)
    tol = 1e-12 * (1.0 + np.abs(cc))
    inside = np.all(proj + spread <= cc + tol, axis=1)
    sep = np.any(proj - spread >= cc - tol, axis=1)
    sep |= np.any(lo >= vmax[objs], axis=1) | np.any(lo + h <= vmin[objs], axis=1)
    status = np.where(inside, 2, np.where(sep, 0, 1))
    return status


def _grid_cells(objects, size):
    """Integer coordinates of ``size``-grid cells meeting each object's bbox."""
    keys = []
    for j, V in enumerate(objects):
        zlo = np.floor(V.min(axis=0) / size).astype(np.int64)
        zhi = np.ceil(V.max(axis=0) / size).astype(np.int64)
        ranges = [np.arange(l, max(h, l + 1)) for l, h in zip(zlo, zhi)]
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, len(zlo))
        keys.append((grid, np.full(len(grid), j)))
    Z = np.concatenate([k[0] for k in keys])
    O = np.concatenate([k[1] for k in keys])
    return Z, O


def _children_offsets(d):
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


def _sort_cells(obj, lo, h):
    order = np.lexsort(tuple(lo[:, k] for k in range(lo.shape[1] - 1, -1, -1)) + (obj,))
    return order


def build_cells_vs_points(points, objects, delta, grid_size, metric="l2", cutoff=None,
                          density=1.0, side="S", method="exact", samples=10**6, seed=0,
                          max_pieces=DEFAULT_MAX_PIECES):
    """Quadtree/octree cells over full-dimensional simplices, refined against points.

    Starts from the ``grid_size`` lattice cells meeting any object and splits
    each cell into 2^d children until every point sees it within the cutoff
    or within ratio 1 + delta.  Each emitted piece is one (cell, object)
    intersection with its clipped mass.  ``method="mc"`` estimates clipped
    masses from ``samples`` uniform samples (fixed ``seed``).
    """
    points = np.asarray(points, dtype=float)
    objects = np.asarray(objects, dtype=float)
    n, m = len(points), len(objects)
    d = objects.shape[2]
    if cutoff is None:
        cutoff = delta / (n * m) ** (1.0 / d)

    def rule(lo, h):
        dmin, dmax = point_box_extremes(points[None], lo[:, None], (lo + h)[:, None], metric)
        return _point_rule(dmin, dmax, delta, cutoff).all(axis=1)

    if method == "mc":
        return _cells_mc(objects, rule, grid_size, density, side, samples, seed,
                         max_pieces, cutoff, delta)
    return _cells_exact(objects, rule, grid_size, density, side, max_pieces, cutoff, delta)


def _cells_exact(objects, rule, grid_size, density, side, max_pieces, cutoff, delta):
    m, _, d = objects.shape
    if d not in (2, 3):
        raise ValueError("exact clipping is limited to d = 2 or 3; use method='mc'")
    normals, offsets = _halfspace_arrays(objects)
    vmin, vmax = objects.min(axis=1), objects.max(axis=1)
    polys = [ConvexPolytope.from_simplex(V) for V in objects]
    Z, O = _grid_cells(objects, grid_size)
    h = float(grid_size)
    lo = Z * h
    status = _classify(lo, h, O, normals, offsets, vmin, vmax)
    keep = status > 0
    lo, O, status = lo[keep], O[keep], status[keep]
    kids = _children_offsets(d)
    out = []                                # (obj, lo, h, status)
    levels = 0
    emitted = 0
    while len(O):
        # the rule depends on the cell only; pairs sharing a cell agree
        done = rule(lo, h)
        out.append((O[done], lo[done], np.full(done.sum(), h), status[done]))
        emitted += int(done.sum())
        lo, O, status = lo[~done], O[~done], status[~done]
        if not len(O):
            break
        if h < FLOOR:
            raise SubdivisionError("subdivision floor reached: cell smaller than 1e-12")
        h *= 0.5
        lo = (lo[:, None, :] + kids[None] * h).reshape(-1, d)
        O = np.repeat(O, len(kids))
        status = np.repeat(status, len(kids))
        bnd = status == 1
        if bnd.any():
            status[bnd] = _classify(lo[bnd], h, O[bnd], normals, offsets, vmin, vmax)
        keep = status > 0
        lo, O, status = lo[keep], O[keep], status[keep]
        levels += 1
        if emitted + len(O) > max_pieces:
            raise SubdivisionError(f"piece budget of {max_pieces} exceeded")
    obj = np.concatenate([o[0] for o in out])
    los = np.concatenate([o[1] for o in out])
    hs = np.concatenate([o[2] for o in out])
    st = np.concatenate([o[3] for o in out])
    measure = np.where(st == 2, hs ** d, 0.0)
    regions = {}
    for k in np.flatnonzero(st == 1):
        poly = polys[obj[k]].clip_box(los[k], los[k] + hs[k])
        vol = poly.volume()
        if vol > 1e-15 * hs[k] ** d:
            measure[k] = vol
            regions[k] = [(poly, density)]
    keep = measure > 0
    return _finish_cells(side, obj, los, hs, measure * density, regions, keep, None,
                         cutoff, delta, levels)


def _finish_cells(side, obj, los, hs, measure, regions, keep, samples, cutoff, delta,
                  levels, three_sigma=0.0):
    idx = np.flatnonzero(keep)
    order = idx[_sort_cells(obj[idx], los[idx], hs[idx])]
    remap = {int(k): i for i, k in enumerate(order)}
    regions = {remap[k]: v for k, v in regions.items() if k in remap}
    pieces = PieceSet(side, "cell", obj[order], los[order], los[order] + hs[order][:, None],
                      measure[order], regions)
    if samples is not None:
        X, w, pid = samples
        # pid indexes the unsorted piece arrays; regroup by final order
        rank = np.full(len(obj), -1)
        rank[order] = np.arange(len(order))
        r = rank[pid]
        ok = r >= 0
        srt = np.argsort(r[ok], kind="stable")
        Xs, ws, rs = X[ok][srt], w[ok][srt], r[ok][srt]
        off = np.searchsorted(rs, np.arange(len(order) + 1))
        pieces.samples = (Xs, ws, off)
    size = float(hs[order].min()) if len(order) else 0.0
    rep = SubdivisionReport(len(pieces), size, float(cutoff), 1.0 + delta, levels, three_sigma)
    return pieces, rep


def draw_samples(objects, total, seed, weights=None):
    """Uniform samples over a union of simplices, allocated by measure.

    Returns (points, object index, per-sample mass) with per-object sample
    masses summing to the object's measure times ``weights``.
    """
    from .geometry import simplex_measure

    rng = np.random.default_rng(seed)
    meas = np.array([simplex_measure(V) for V in objects])
    if weights is None:
        weights = np.ones(len(objects))
    share = meas / meas.sum()
    counts = np.maximum(1, np.round(share * total).astype(int))
    X, O, W = [], [], []
    for j, V in enumerate(objects):
        X.append(sample_simplex(V, counts[j], rng))
        O.append(np.full(counts[j], j))
        W.append(np.full(counts[j], meas[j] * weights[j] / counts[j]))
    return np.concatenate(X), np.concatenate(O), np.concatenate(W)


def _encode(Z):
    """Integer keys for rows of ``Z`` (falls back to row-unique on overflow)."""
    zmin = Z.min(axis=0)
    span = Z.max(axis=0) - zmin + 1
    if np.sum(np.log2(span.astype(float))) < 62:
        mult = np.cumprod(np.concatenate([[1], span[:-1]])).astype(np.int64)
        return (Z - zmin) @ mult
    _, inv = np.unique(Z, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


def _cells_mc(objects, rule, grid_size, density, side, samples, seed, max_pieces,
              cutoff, delta):
    X, SO, SW = draw_samples(objects, samples, seed)
    SW = SW * density
    d = X.shape[1]
    h = float(grid_size)
    Z = np.floor(X / h).astype(np.int64)
    alive = np.arange(len(X))
    out_obj, out_lo, out_h, out_pid_samples = [], [], [], []
    levels = 0
    npieces = 0
    while len(alive):
        key = _encode(Z)
        ukey, first, inv = np.unique(key, return_index=True, return_inverse=True)
        lo = Z[first] * h
        done_cell = rule(lo, h)
        done = done_cell[inv]
        if done.any():
            # pieces: (cell, object) pairs among finished samples
            pk = inv[done] * (len(objects)) + SO[alive[done]]
            upk, pinv = np.unique(pk, return_inverse=True)
            cells = upk // len(objects)
            out_obj.append(upk % len(objects))
            out_lo.append(lo[cells])
            out_h.append(np.full(len(upk), h))
            out_pid_samples.append((alive[done], pinv + npieces))
            npieces += len(upk)
        alive, Z = alive[~done], Z[~done]
        if not len(alive):
            break
        if h < FLOOR:
            raise SubdivisionError("subdivision floor reached: cell smaller than 1e-12")
        h *= 0.5
        Z = 2 * Z + np.clip(np.floor(X[alive] / h).astype(np.int64) - 2 * Z, 0, 1)
        levels += 1
        if npieces > max_pieces:
            raise SubdivisionError(f"piece budget of {max_pieces} exceeded")
    obj = np.concatenate(out_obj)
    los = np.concatenate(out_lo)
    hs = np.concatenate(out_h)
    sidx = np.concatenate([p[0] for p in out_pid_samples])
    pid = np.concatenate([p[1] for p in out_pid_samples])
    measure = np.bincount(pid, weights=SW[sidx], minlength=len(obj))
    # 3-sigma of the total clipped-mass error, summed over pieces
    cnt = np.bincount(pid, minlength=len(obj)).astype(float)
    tot = np.bincount(SO, minlength=len(objects)).astype(float)
    frac = cnt / tot[obj]
    mass_obj = np.bincount(SO, weights=SW, minlength=len(objects))
    sig = mass_obj[obj] * np.sqrt(frac * (1 - frac) / tot[obj])
    keep = measure > 0
    return _finish_cells(side, obj, los, hs, measure, {}, keep, (X[sidx], SW[sidx], pid),
                         cutoff, delta, levels, float(3.0 * np.sqrt((sig ** 2).sum())))


# ------------------------------------------------------ residual vs residual

def _proxy_tree(centers, radius):
    return cKDTree(centers), float(radius)


def _separation_done(center, radius, diam, tree, proxy_r, delta):
    """Sufficient ratio rule: diam <= (delta / 2) * (lower bound on distance)."""
    dist, _ = tree.query(center, k=1)
    lower = dist - proxy_r - radius
    return (lower > 0) & (diam <= 0.5 * delta * lower), lower


def _segment_proxies(pieces, h):
    """Chop subsegments into chunks of length <= h: (centers, radius)."""
    L = np.linalg.norm(pieces.b - pieces.a, axis=1)
    k = np.maximum(1, np.ceil(L / h).astype(int))
    idx = np.repeat(np.arange(len(L)), k)
    pos = np.concatenate([(np.arange(c) + 0.5) / c for c in k])
    C = pieces.a[idx] + pos[:, None] * (pieces.b - pieces.a)[idx]
    return C, float((L / k).max()) / 2.0


def residual_clearance(X, Y, metric="l2"):
    """Smallest closest-point distance between two piece sets."""
    if not len(X) or not len(Y):
        return math.inf
    best = math.inf
    for i0 in range(0, len(X), 512):
        dmin, _ = piece_extremes(_take(X, np.arange(i0, min(len(X), i0 + 512))), Y, metric)
        best = min(best, float(dmin.min()))
    return best


def _take(ps, idx):
    return PieceSet(ps.side, ps.kind, ps.obj[idx], ps.a[idx], ps.b[idx], ps.measure[idx])


def subdivide_segments_vs_segments(ps, ss, delta, metric="l2", clearance=None,
                                   max_pieces=DEFAULT_MAX_PIECES):
    """Refine two residual subsegment sets against each other.

    A piece stops once its diameter is at most ``delta / 2`` times a lower
    bound on its distance to the whole opposite residual; then every pair of
    final pieces has farthest/closest distance ratio <= 1 + delta.
    ``clearance`` (if given) is the required minimum residual distance.
    """
    actual = residual_clearance(ps, ss, metric)
    if clearance is not None and actual < clearance * (1 - 1e-9):
        log.warning("residual clearance %.3g below the required %.3g", actual, clearance)
    if len(ps) and len(ss) and actual <= 0:
        raise SubdivisionError("residual sets touch; cannot separate them by subdivision")
    out = []
    reports = []
    for mine, other in ((ps, ss), (ss, ps)):
        if not len(mine):
            out.append(mine)
            reports.append(SubdivisionReport(0, 0.0, float(clearance or 0), 1 + delta))
            continue
        if not len(other):
            out.append(mine)
            reports.append(SubdivisionReport(len(mine), float(mine.diameter().min()),
                                             float(clearance or 0), 1 + delta))
            continue
        h = max(min(actual, clearance or actual) / 4.0, FLOOR)
        C, r = _segment_proxies(other, h)
        tree = cKDTree(C)
        A, B = mine.a, mine.b
        dens = mine.measure / np.linalg.norm(B - A, axis=1)
        obj_idx = np.arange(len(mine))
        t0 = np.zeros(len(mine))
        t1 = np.ones(len(mine))
        res = []
        levels = 0
        while len(obj_idx):
            a = A[obj_idx] + t0[:, None] * (B - A)[obj_idx]
            b = A[obj_idx] + t1[:, None] * (B - A)[obj_idx]
            diam = _norm(b - a, metric)
            done, _ = _separation_done(0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1),
                                       diam, tree, r, delta)
            res.append((obj_idx[done], t0[done], t1[done]))
            obj_idx, t0, t1 = obj_idx[~done], t0[~done], t1[~done]
            if not len(obj_idx):
                break
            if np.any(np.linalg.norm((B - A)[obj_idx], axis=1) * (t1 - t0) < FLOOR):
                raise SubdivisionError("subdivision floor reached: subsegment shorter than 1e-12")
            mid = 0.5 * (t0 + t1)
            obj_idx = np.repeat(obj_idx, 2)
            t0, t1 = np.stack([t0, mid], 1).ravel(), np.stack([mid, t1], 1).ravel()
            levels += 1
            if sum(len(x[0]) for x in res) + len(obj_idx) > max_pieces:
                raise SubdivisionError(f"piece budget of {max_pieces} exceeded")
        src = np.concatenate([x[0] for x in res])
        t0 = np.concatenate([x[1] for x in res])
        t1 = np.concatenate([x[2] for x in res])
        order = np.lexsort((t0, src))
        src, t0, t1 = src[order], t0[order], t1[order]
        a = A[src] + t0[:, None] * (B - A)[src]
        b = A[src] + t1[:, None] * (B - A)[src]
        meas = dens[src] * np.linalg.norm(b - a, axis=1)
        out.append(PieceSet(mine.side, "subsegment", mine.obj[src], a, b, meas))
        reports.append(SubdivisionReport(len(src), float(np.linalg.norm(b - a, axis=1).min()),
                                         float(clearance or actual), 1 + delta, levels))
    return out[0], out[1], reports


def build_cells_vs_cells(rp, rs, delta, metric="l2", clearance=None, cutoff=0.0,
                         max_pieces=DEFAULT_MAX_PIECES):
    """Refine two residual cell sets against each other (separation rule).

    Cells split into 2^d children; a child's mass is recomputed from the
    piece's exact region polytopes or Monte Carlo samples, scaled by the
    piece's remaining density.  A cell also stops once its diameter is at
    most ``cutoff``; every final pair then has dmax <= (1 + delta) dmin +
    2 cutoff.
    """
    out, reports = [], []
    for mine, other in ((rp, rs), (rs, rp)):
        if not len(mine) or not len(other):
            out.append(mine)
            reports.append(SubdivisionReport(len(mine), 0.0, float(clearance or 0), 1 + delta))
            continue
        centers = other.rep
        radius = 0.5 * float(np.linalg.norm(other.b - other.a, axis=1).max())
        tree = cKDTree(centers)
        p, rep = _refine_cells(mine, tree, radius, delta, metric, max_pieces, cutoff)
        rep.cutoff = float(cutoff)
        out.append(p)
        reports.append(rep)
    return out[0], out[1], reports


def _coarse_groups(ps, tree, proxy_r, delta, metric, cutoff):
    """Blocks of aligned equal grid cells (same object) that can stop as one piece.

    Walks an implicit quadtree/octree over the cells' integer grid
    coordinates from the coarsest block down; a block stops when its box
    passes the separation or diameter rule.  Returns ([(members, lo, side)],
    indices of cells left for ordinary refinement).
    """
    d = ps.dim
    sides = (ps.b - ps.a)[:, 0] if len(ps) else np.zeros(0)
    if len(ps) < 2 or np.ptp(sides) > 1e-12 * sides.max():
        return [], np.arange(len(ps))
    g = float(sides[0])
    Z = np.round(ps.a / g).astype(np.int64)
    if np.abs(Z * g - ps.a).max() > 1e-9 * max(1.0, g):
        return [], np.arange(len(ps))
    span = int((Z.max(axis=0) - Z.min(axis=0)).max()) + 1
    top = max(0, int(math.ceil(math.log2(span))) + 1)
    alive = np.arange(len(ps))
    merged = []
    for lev in range(top, 0, -1):
        if not len(alive):
            break
        key = np.c_[ps.obj[alive], Z[alive] >> lev]
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        side = g * 2 ** lev
        blo = uniq[:, 1:] * side
        diam = float(_norm(np.full(d, side), metric))
        done, _ = _separation_done(blo + 0.5 * side, 0.5 * math.sqrt(d) * side,
                                   np.full(len(uniq), diam), tree, proxy_r, delta)
        done |= diam <= cutoff
        if not done.any():
            continue
        srt = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[srt], np.arange(len(uniq) + 1))
        for gi in np.flatnonzero(done):
            members = alive[srt[bounds[gi]:bounds[gi + 1]]]
            merged.append((members, blo[gi].astype(float), side))
        alive = alive[~done[inv]]
    return merged, alive


def _refine_cells(ps, tree, proxy_r, delta, metric, max_pieces, cutoff=0.0):
    d = ps.dim
    kids = _children_offsets(d)
    mc = ps.samples is not None
    # full cells carry uniform density measure / volume
    dens = ps.measure / np.prod(ps.b - ps.a, axis=1)
    out_src, out_lo, out_h, out_meas, out_reg, out_samp = [], [], [], [], [], []
    # coarse phase: whole blocks of grid cells that already satisfy the rule
    merged, alive = _coarse_groups(ps, tree, proxy_r, delta, metric, cutoff)
    for members, blo, side in merged:
        out_src.append(members[0])
        out_lo.append(blo)
        out_h.append(side)
        out_meas.append(float(ps.measure[members].sum()))
        if mc:
            parts = [ps.sample_slice(k) for k in members]
            out_samp.append((np.concatenate([q[0] for q in parts]),
                             np.concatenate([q[1] for q in parts])))
        else:
            reg = []
            for k in members:
                reg.extend(ps.regions.get(k) or [(ConvexPolytope.box(ps.a[k], ps.b[k]), dens[k])])
            out_reg.append(reg)
    # work items: origin piece, lo, h, plus region list / samples keyed by position
    lo = ps.a[alive].copy()
    h = (ps.b - ps.a)[alive, 0].copy()
    src = alive.copy()
    regions = {i: ps.regions[k] for i, k in enumerate(alive) if k in ps.regions}
    samp = {i: ps.sample_slice(k) for i, k in enumerate(alive)} if mc else None
    levels = 0
    while len(src):
        center = lo + 0.5 * h[:, None]
        diam = _norm(h[:, None] * np.ones(d), metric)
        done, _ = _separation_done(center, 0.5 * math.sqrt(d) * h, diam, tree, proxy_r, delta)
        done |= diam <= cutoff
        new_src, new_lo, new_h = [], [], []
        new_regions, new_samp = {}, {}
        for i in range(len(src)):
            key = i
            if done[i]:
                out_src.append(src[i])
                out_lo.append(lo[i])
                out_h.append(h[i])
                if mc:
                    Xs, ws = samp[key]
                    out_meas.append(float(ws.sum()))
                    out_samp.append((Xs, ws))
                else:
                    reg = regions.get(key)
                    if reg is None:
                        out_meas.append(dens[src[i]] * h[i] ** d)
                    else:
                        out_meas.append(sum(w * r.volume() for r, w in reg))
                    out_reg.append(reg)
                continue
            if h[i] < FLOOR:
                raise SubdivisionError("subdivision floor reached: cell smaller than 1e-12")
            hh = 0.5 * h[i]
            for off in kids:
                clo = lo[i] + off * hh
                j = len(new_src)
                if mc:
                    Xs, ws = samp[key]
                    inside = np.all((Xs >= clo) & (Xs < clo + hh), axis=1)
                    if not inside.any():
                        continue
                    new_samp[j] = (Xs[inside], ws[inside])
                else:
                    reg = regions.get(key)
                    if reg is not None:
                        parts = [(r.clip_box(clo, clo + hh), w) for r, w in reg]
                        parts = [(q, w) for q, w in parts if not q.is_empty() and q.volume() > 0]
                        if not parts:
                            continue
                        new_regions[j] = parts
                new_src.append(src[i])
                new_lo.append(clo)
                new_h.append(hh)
        src = np.array(new_src, dtype=int)
        lo = np.array(new_lo).reshape(-1, d)
        h = np.array(new_h)
        regions, samp = new_regions, new_samp
        levels += 1
        if len(out_src) + len(src) > max_pieces:
            raise SubdivisionError(f"piece budget of {max_pieces} exceeded")
    out_src = np.array(out_src, dtype=int)
    out_lo = np.array(out_lo).reshape(-1, d)
    out_h = np.array(out_h)
    meas = np.array(out_meas)
    obj = ps.obj[out_src]
    keep = meas > 0
    reg = {k: r for k, r in enumerate(out_reg) if r is not None} if not mc else {}
    samples = None
    if mc:
        X = np.concatenate([s[0] for s in out_samp]) if out_samp else np.zeros((0, d))
        w = np.concatenate([s[1] for s in out_samp]) if out_samp else np.zeros(0)
        pid = np.repeat(np.arange(len(out_samp)), [len(s[1]) for s in out_samp])
        samples = (X, w, pid)
    pieces, rep = _finish_cells(ps.side, obj, out_lo, out_h, meas, reg, keep, samples,
                                0.0, delta, levels)
    return pieces, rep
