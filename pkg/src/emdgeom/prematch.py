"""Greedy pre-matching of nearby mass between two object sides.

Segments: equal-mass subsegments whose affine pairing keeps every point
within ``kappa`` are matched until none remain.  Simplices: exact overlap is
cancelled at distance zero, then a grid of cells matches mass inside each
cell and with its neighbours, leaving opposite residual cells non-adjacent.
"""
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .discretize import PieceSet, draw_samples
from .geometry import _norm, box_box_extremes, segment_pair_extremes
from .polytope import ConvexPolytope

log = logging.getLogger(__name__)

IDENTITY, AFFINE, PRODUCT = 0, 1, 2
_GRID = 257
_ZOOM = 10


@dataclass
class GreedyMatch:
    """Matched mass pairs plus the residual mass of both sides.

    ``src[k]`` on side P is sent to ``dst[k]`` on side S with ``mass[k]``;
    ``coupling[k]`` says how: IDENTITY (same region, distance 0), AFFINE
    (subsegment endpoints correspond a->a, b->b) or PRODUCT (uniform spread
    over both cells).  ``dmax[k]`` is the pair's distance bound.
    """
    src: PieceSet
    dst: PieceSet
    mass: np.ndarray
    dmin: np.ndarray
    dmax: np.ndarray
    coupling: np.ndarray
    residual_p: PieceSet
    residual_s: PieceSet
    kappa: float
    clearance: float

    @property
    def total_matched_mass(self):
        return float(self.mass.sum())

    def __len__(self):
        return len(self.mass)

    def cost_upper(self):
        return float(self.mass @ self.dmax)

    def cost_lower(self):
        return float(self.mass @ self.dmin)


# ------------------------------------------------------------------ segments

def _sublevel(a, b, kappa, metric):
    """Interval {t : ||a + t b|| <= kappa} for each row of ``a`` (NaN if empty)."""
    G = len(a)
    lo = np.full(G, np.nan)
    hi = np.full(G, np.nan)
    if metric in ("l2", 2):
        B = float(b @ b)
        if B < 1e-28:
            ok = np.linalg.norm(a, axis=1) <= kappa
            lo[ok], hi[ok] = -np.inf, np.inf
            return lo, hi
        ab = a @ b
        fmin2 = np.einsum("ij,ij->i", a, a) - ab * ab / B
        ok = fmin2 <= kappa * kappa
        tc = -ab[ok] / B
        half = np.sqrt(np.maximum(kappa * kappa - fmin2[ok], 0.0) / B) * (1 - 1e-12)
        lo[ok], hi[ok] = tc - half, tc + half
        return lo, hi
    nz = np.abs(b) > 1e-14
    if not nz.any():
        ok = np.abs(a).sum(axis=1) <= kappa
        lo[ok], hi[ok] = -np.inf, np.inf
        return lo, hi
    cand = -a[:, nz] / b[nz]
    vals = np.abs(a[:, None, :] + cand[:, :, None] * b).sum(axis=2)
    k = np.argmin(vals, axis=1)
    tc = cand[np.arange(G), k]
    fmin = vals[np.arange(G), k]
    ok = fmin <= kappa
    span = (kappa + fmin) / np.abs(b).sum() + 1e-12

    def f(t):
        return np.abs(a + t[:, None] * b).sum(axis=1)

    for sgn, out in ((-1.0, lo), (1.0, hi)):
        inner = tc.copy()
        outer = tc + sgn * span
        for _ in range(80):
            mid = 0.5 * (inner + outer)
            good = f(mid) <= kappa
            inner = np.where(good, mid, inner)
            outer = np.where(good, outer, mid)
        out[ok] = inner[ok]
    return lo, hi


def _chords(c, sigma, lam, A, ep, As, es, ivp, ivs, kappa, metric):
    """Matchable stretch along the lines beta = c + sigma * lam * alpha."""
    if sigma > 0:
        rlo, rhi = (ivs[0] - c) / lam, (ivs[1] - c) / lam
    else:
        rlo, rhi = (c - ivs[1]) / lam, (c - ivs[0]) / lam
    rlo = np.maximum(rlo, ivp[0])
    rhi = np.minimum(rhi, ivp[1])
    a = (A - As)[None, :] - c[:, None] * es[None, :]
    b = ep - sigma * lam * es
    elo, ehi = _sublevel(a, b, kappa, metric)
    lo = np.maximum(rlo, elo)
    hi = np.minimum(rhi, ehi)
    length = np.where(np.isnan(lo) | np.isnan(hi), 0.0, np.maximum(hi - lo, 0.0))
    return length, lo, hi


def _longest_match(A, ep, ivp, As, es, ivs, lam, kappa, metric):
    """Longest affine pairing of p-interval ``ivp`` with s-interval ``ivs``.

    Intervals are arc-length ranges along the original segments.  The set of
    feasible parameter pairs is convex and the stretch length along parallel
    lines is concave in the line offset, so a grid scan followed by zooming
    around the best line finds the maximum.
    """
    best = (0.0, None)
    for sigma in (1.0, -1.0):
        if sigma > 0:
            c0, c1 = ivs[0] - lam * ivp[1], ivs[1] - lam * ivp[0]
        else:
            c0, c1 = ivs[0] + lam * ivp[0], ivs[1] + lam * ivp[1]
        lo_c, hi_c = c0, c1
        for _ in range(_ZOOM):
            c = np.linspace(lo_c, hi_c, _GRID)
            length, lo, hi = _chords(c, sigma, lam, A, ep, As, es, ivp, ivs, kappa, metric)
            k = int(np.argmax(length))
            if length[k] <= 0:
                break
            if length[k] > best[0]:
                best = (float(length[k]), (sigma, float(c[k]), float(lo[k]), float(hi[k])))
            step = (hi_c - lo_c) / (_GRID - 1)
            lo_c, hi_c = max(c0, c[k] - step), min(c1, c[k] + step)
            if hi_c - lo_c <= 1e-15 * max(1.0, abs(c[k])):
                break
    return best


def greedy_match_segments(P, S, kappa, metric="l2", density_p=1.0, density_s=1.0,
                          tol=1e-12, max_rounds=200):
    """Greedily match P and S subsegments within pointwise distance ``kappa``.

    P objects are visited in index order, each against S objects in index
    order; every (residual p piece, residual s piece) pair is matched along
    its longest feasible stretch until nothing longer than ``tol`` remains,
    and passes repeat until a full pass makes no match.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    n, m, d = len(P), len(S), P.shape[2]
    Lp = np.linalg.norm(P[:, 1] - P[:, 0], axis=1)
    Ls = np.linalg.norm(S[:, 1] - S[:, 0], axis=1)
    Ep = (P[:, 1] - P[:, 0]) / Lp[:, None]
    Es = (S[:, 1] - S[:, 0]) / Ls[:, None]
    lam = density_p / density_s       # s-length per unit p-length at equal mass
    resP = [[(0.0, float(Lp[i]))] for i in range(n)]
    resS = [[(0.0, float(Ls[j]))] for j in range(m)]
    scale = max(Lp.max(), Ls.max())
    pairs = []
    for _ in range(max_rounds):
        changed = False
        for i in range(n):
            for j in range(m):
                guard = 0
                while guard < 10 * max_rounds:
                    guard += 1
                    found = None
                    for ip, ivp in enumerate(resP[i]):
                        for js, ivs in enumerate(resS[j]):
                            pa, pb = P[i, 0] + ivp[0] * Ep[i], P[i, 0] + ivp[1] * Ep[i]
                            sa, sb = S[j, 0] + ivs[0] * Es[j], S[j, 0] + ivs[1] * Es[j]
                            dmin, _ = segment_pair_extremes([pa], [pb], [sa], [sb], metric)
                            if dmin[0, 0] > kappa:
                                continue
                            ell, how = _longest_match(P[i, 0], Ep[i], ivp, S[j, 0], Es[j], ivs,
                                                      lam, kappa, metric)
                            if ell > tol * scale and (found is None or ell > found[0]):
                                found = (ell, ip, js, how)
                    if found is None:
                        break
                    ell, ip, js, (sigma, c, lo, hi) = found
                    b1, b2 = c + sigma * lam * lo, c + sigma * lam * hi
                    pairs.append((i, lo, hi, j, b1, b2))
                    ivp, ivs = resP[i].pop(ip), resS[j].pop(js)
                    resP[i].extend(iv for iv in ((ivp[0], lo), (hi, ivp[1]))
                                   if iv[1] - iv[0] > tol * scale)
                    bl, bh = min(b1, b2), max(b1, b2)
                    resS[j].extend(iv for iv in ((ivs[0], bl), (bh, ivs[1]))
                                   if iv[1] - iv[0] > tol * scale)
                    resP[i].sort()
                    resS[j].sort()
                    changed = True
        if not changed:
            break

    def seg_pieces(side, segs, E, res, dens):
        rows = [(k, lo, hi) for k in range(len(segs)) for lo, hi in res[k]]
        if not rows:
            return PieceSet.empty(side, "subsegment", d)
        k = np.array([r[0] for r in rows])
        lo = np.array([r[1] for r in rows])
        hi = np.array([r[2] for r in rows])
        a = segs[k, 0] + lo[:, None] * E[k]
        b = segs[k, 0] + hi[:, None] * E[k]
        return PieceSet(side, "subsegment", k, a, b, dens * (hi - lo))

    rp = seg_pieces("P", P, Ep, resP, density_p)
    rs = seg_pieces("S", S, Es, resS, density_s)
    if pairs:
        pi = np.array([q[0] for q in pairs])
        sj = np.array([q[3] for q in pairs])
        plo = np.array([q[1] for q in pairs])
        phi = np.array([q[2] for q in pairs])
        b1 = np.array([q[4] for q in pairs])
        b2 = np.array([q[5] for q in pairs])
        pa, pb = P[pi, 0] + plo[:, None] * Ep[pi], P[pi, 0] + phi[:, None] * Ep[pi]
        sa, sb = S[sj, 0] + b1[:, None] * Es[sj], S[sj, 0] + b2[:, None] * Es[sj]
        mass = density_p * (phi - plo)
        src = PieceSet("P", "subsegment", pi, pa, pb, mass.copy())
        dst = PieceSet("S", "subsegment", sj, sa, sb, mass.copy())
        dmax = np.maximum(_norm(pa - sa, metric), _norm(pb - sb, metric))
        dmin = np.array([segment_pair_extremes([pa[k]], [pb[k]], [sa[k]], [sb[k]], metric)[0][0, 0]
                         for k in range(len(pairs))])
        coupling = np.full(len(pairs), AFFINE)
    else:
        src = PieceSet.empty("P", "subsegment", d)
        dst = PieceSet.empty("S", "subsegment", d)
        mass = dmin = dmax = np.zeros(0)
        coupling = np.zeros(0, dtype=int)
    from .discretize import residual_clearance
    clearance = residual_clearance(rp, rs, metric)
    return GreedyMatch(src, dst, mass, dmin, dmax, coupling, rp, rs, float(kappa), clearance)


# ---------------------------------------------------------------------- grid

def grid_cell_size(delta, n, m, d):
    """Matching grid: delta / (2 sqrt(nm)) in the plane, delta / (4 (nm)^(1/d)) otherwise."""
    if d == 2:
        return delta / (2.0 * math.sqrt(n * m))
    return delta / (4.0 * (n * m) ** (1.0 / d))


def _remove_overlap(P, S, dens_p, dens_s):
    """Cancel P/S overlap at distance zero.

    Returns residual parts per object as lists of (polytope, density) and the
    matched overlap records (i, j, polytope, mass).  When the two densities
    differ, the denser side keeps the surplus on the overlap region.
    """
    resP = [[(ConvexPolytope.from_simplex(V), dens_p)] for V in P]
    resS = [[(ConvexPolytope.from_simplex(V), dens_s)] for V in S]
    matched = []
    for i in range(len(P)):
        for j in range(len(S)):
            parts_s = resS[j]
            queue = list(resP[i])
            kept = []
            while queue:
                A, da = queue.pop(0)
                for bi, (B, db) in enumerate(parts_s):
                    inter = A.intersect(B)
                    if inter.is_empty():
                        continue
                    vol = inter.volume()
                    if vol <= 1e-14:
                        continue
                    mu = min(da, db)
                    matched.append((i, j, inter, mu * vol))
                    rest_b = [(q, db) for q in B.difference(inter)]
                    if db > mu:
                        rest_b.append((inter, db - mu))
                    parts_s = parts_s[:bi] + rest_b + parts_s[bi + 1:]
                    rest_a = [(q, da) for q in A.difference(inter)]
                    if da > mu:
                        rest_a.append((inter, da - mu))
                    queue = rest_a + queue
                    break
                else:
                    kept.append((A, da))
            resP[i] = kept
            resS[j] = parts_s
    return resP, resS, matched


def _occupancy_exact(res, g, d):
    """(object, cell key) -> [mass, parts] from residual polytope parts."""
    occ = {}
    for j, parts in enumerate(res):
        for poly, dens in parts:
            if poly.is_empty():
                continue
            lo, hi = poly.bbox()
            zlo = np.floor(lo / g).astype(np.int64)
            zhi = np.ceil(hi / g).astype(np.int64)
            for z in itertools.product(*[range(a, max(b, a + 1)) for a, b in zip(zlo, zhi)]):
                clo = np.array(z) * g
                q = poly.clip_box(clo, clo + g)
                if q.is_empty():
                    continue
                vol = q.volume()
                if vol <= 1e-15 * g ** d:
                    continue
                ent = occ.setdefault((j, z), [0.0, []])
                ent[0] += dens * vol
                ent[1].append((q, dens))
    return occ


def _occupancy_mc(objects, g, samples, seed, density):
    X, O, W = draw_samples(objects, samples, seed)
    W = W * density
    Z = np.floor(X / g).astype(np.int64)
    occ = {}
    keys = np.concatenate([O[:, None], Z], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    mass = np.bincount(inv, weights=W)
    order = np.argsort(inv, kind="stable")
    off = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
    for u in range(len(uniq)):
        idx = order[off[u]:off[u + 1]]
        occ[(int(uniq[u, 0]), tuple(int(v) for v in uniq[u, 1:]))] = [float(mass[u]), (X[idx], W[idx])]
    return occ


def greedy_match_grid(P, S, cell, metric="l2", density_p=1.0, density_s=1.0,
                      method="exact", samples=10**6, seed=0):
    """Grid-based greedy matching of two simplex sets.

    ``method="exact"`` (d = 2, 3) removes the exact overlap first and clips
    residual polytopes to grid cells; ``method="mc"`` works on per-cell
    sample masses and skips the overlap step.  Cells then cancel P against S
    mass inside themselves, then against each of their 3^d - 1 neighbours in
    lexicographic offset order.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    d = P.shape[2]
    g = float(cell)
    overlap = []
    if method == "exact":
        resP, resS, overlap = _remove_overlap(P, S, density_p, density_s)
        occP = _occupancy_exact(resP, g, d)
        occS = _occupancy_exact(resS, g, d)
    else:
        occP = _occupancy_mc(P, g, samples, seed, density_p)
        occS = _occupancy_mc(S, g, samples, seed + 1, density_s)

    def index(occ):
        keys = sorted(occ, key=lambda k: (k[1], k[0]))
        by_cell = {}
        for k in keys:
            by_cell.setdefault(k[1], []).append(k)
        return by_cell

    cellsP, cellsS = index(occP), index(occS)
    remP = {k: v[0] for k, v in occP.items()}
    remS = {k: v[0] for k, v in occS.items()}
    pairs = []                                  # (P key, S key, mass)

    def cancel(zp, zs):
        kp = [k for k in cellsP.get(zp, ()) if remP[k] > 0]
        ks = [k for k in cellsS.get(zs, ()) if remS[k] > 0]
        if not kp or not ks:
            return
        tp = sum(remP[k] for k in kp)
        ts = sum(remS[k] for k in ks)
        amount = min(tp, ts)
        # northwest corner across objects; the smaller side ends exactly empty
        i = j = 0
        left = amount
        while i < len(kp) and j < len(ks) and left > 0:
            f = min(remP[kp[i]], remS[ks[j]], left)
            pairs.append((kp[i], ks[j], f))
            remP[kp[i]] -= f
            remS[ks[j]] -= f
            left -= f
            if remP[kp[i]] <= 1e-15 * amount:
                i += 1
            if j < len(ks) and remS[ks[j]] <= 1e-15 * amount:
                j += 1
        for k in (kp if tp <= ts else ks):
            (remP if tp <= ts else remS)[k] = 0.0

    for z in sorted(set(cellsP) & set(cellsS)):
        cancel(z, z)
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    for o in offsets:
        for z in sorted(cellsP):
            zs = tuple(a + b for a, b in zip(z, o))
            if zs in cellsS:
                cancel(z, zs)

    mc = method != "exact"

    def cell_pieces(side, occ, rem, keys):
        keys = [k for k in keys if rem[k] > 0]
        if not keys:
            return PieceSet.empty(side, "cell", d)
        obj = np.array([k[0] for k in keys])
        lo = np.array([k[1] for k in keys], dtype=float).reshape(-1, d) * g
        meas = np.array([rem[k] for k in keys])
        ps = PieceSet(side, "cell", obj, lo, lo + g, meas)
        if mc:
            Xs, Ws, cnt = [], [], []
            for k in keys:
                X, W = occ[k][1]
                phi = rem[k] / occ[k][0]
                Xs.append(X)
                Ws.append(W * phi)
                cnt.append(len(W))
            ps.samples = (np.concatenate(Xs), np.concatenate(Ws),
                          np.concatenate([[0], np.cumsum(cnt)]))
        else:
            for idx, k in enumerate(keys):
                phi = rem[k] / occ[k][0]
                ps.regions[idx] = [(q, w * phi) for q, w in occ[k][1]]
        return ps

    allP = sorted(occP, key=lambda k: (k[0], k[1]))
    allS = sorted(occS, key=lambda k: (k[0], k[1]))
    rp = cell_pieces("P", occP, remP, allP)
    rs = cell_pieces("S", occS, remS, allS)

    # matched records: overlap first (identity), then cell pairs (product)
    src_obj, dst_obj, lo_p, hi_p, lo_s, hi_s, mass, coup, dmin, dmax = ([] for _ in range(10))
    src_reg, dst_reg = {}, {}
    for i, j, poly, mu in overlap:
        lo, hi = poly.bbox()
        src_reg[len(mass)] = [(poly, 1.0)]
        dst_reg[len(mass)] = [(poly, 1.0)]
        src_obj.append(i)
        dst_obj.append(j)
        lo_p.append(lo)
        hi_p.append(hi)
        lo_s.append(lo)
        hi_s.append(hi)
        mass.append(mu)
        coup.append(IDENTITY)
        dmin.append(0.0)
        dmax.append(0.0)
    for kp, ks, f in pairs:
        lp = np.array(kp[1], dtype=float) * g
        ls = np.array(ks[1], dtype=float) * g
        a, b = box_box_extremes(lp, lp + g, ls, ls + g, metric)
        src_obj.append(kp[0])
        dst_obj.append(ks[0])
        lo_p.append(lp)
        hi_p.append(lp + g)
        lo_s.append(ls)
        hi_s.append(ls + g)
        mass.append(f)
        coup.append(PRODUCT)
        dmin.append(float(a))
        dmax.append(float(b))
    mass = np.array(mass)
    if len(mass):
        src = PieceSet("P", "cell", np.array(src_obj), np.array(lo_p), np.array(hi_p),
                       mass.copy(), src_reg)
        dst = PieceSet("S", "cell", np.array(dst_obj), np.array(lo_s), np.array(hi_s),
                       mass.copy(), dst_reg)
    else:
        src, dst = PieceSet.empty("P", "cell", d), PieceSet.empty("S", "cell", d)
    kappa = float(_norm(np.full(d, 2 * g), metric))
    clear = g if len(rp) and len(rs) else math.inf
    return GreedyMatch(src, dst, mass, np.array(dmin), np.array(dmax),
                       np.array(coup, dtype=int), rp, rs, kappa, clear)
