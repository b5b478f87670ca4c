"""End-to-end approximation drivers: scene -> (pre-matching) -> subdivision
-> exact flow -> continuous plan, with an explicit guarantee record."""
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretize import (DEFAULT_MAX_PIECES, PieceSet, build_cells_vs_cells,
                         build_cells_vs_points, piece_extremes,
                         subdivide_segments_vs_points, subdivide_segments_vs_segments)
from .flowsolve import DENSE_LIMIT, solve_transportation
from .lift import DEFAULT_ORDER, assemble_plan, validate_plan
from .prematch import greedy_match_grid, greedy_match_segments, grid_cell_size
from .scene import normalize

log = logging.getLogger(__name__)

# pair kind -> (delta divisor, delta cap, cap label)
DELTA_RULES = {
    "points-segments": (17.0, 0.25, "1/4"),
    "points-triangles": (9.0, 1.0 / (2.0 * math.pi), "1/(2π)"),
    "points-simplices": (21.0, 0.2, "1/5"),
    "segments-segments": (3.0, None, None),
    "triangles-triangles": (3.0, None, None),
    "simplices-simplices": (3.0, None, None),
}
# divisor that would apply with a (1 + delta)-approximate inner solver
APPROX_SOLVER_DIVISOR = {"points-segments": 25.0}
BALANCE_TOL = 1e-9


class PipelineError(RuntimeError):
    """Unsupported input or a stage that broke mass balance."""


class DeltaClampWarning(UserWarning):
    pass


def canonical_kind(scene):
    """Pair kind with the point side first, plus whether the sides were swapped."""
    a, b = scene.P.kind, scene.S.kind
    if a != "points" and b == "points":
        return f"points-{a}", True
    return f"{a}-{b}", False


def delta_for(kind, epsilon):
    """(delta, clamped) for a pair kind and target epsilon."""
    if kind not in DELTA_RULES:
        raise PipelineError(f"unsupported pair kind {kind}")
    div, cap, label = DELTA_RULES[kind]
    delta = epsilon / div
    if cap is not None and delta > cap:
        msg = f"delta clamped to {label}"
        log.warning(msg)
        warnings.warn(msg, DeltaClampWarning, stacklevel=3)
        return cap, True
    return delta, False


def unit_ball_volume(k):
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


@dataclass
class PipelineConfig:
    epsilon: float = 0.2
    method: str = "auto"            # auto | exact | mc (cell clipping)
    samples: int = 10**6
    seed: int = 0
    order: int = DEFAULT_ORDER
    kappa: float = None             # override for the matching distance, input units
    max_pieces: int = DEFAULT_MAX_PIECES
    cell_cutoff_factor: float = 1.0  # cells-vs-cells diameter cutoff, in units of sqrt(d) delta / (nm)^(1/d)
    validate: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise PipelineError("epsilon must be positive")
        if self.method not in ("auto", "exact", "mc"):
            raise PipelineError(f"unknown clipping method {self.method!r}")


@dataclass
class Guarantee:
    """What the run proves about its own output (all costs in input units)."""
    pair_kind: str
    epsilon: float
    delta: float
    clamped: bool
    ratio: float                    # (1 + delta)^2
    sandwich_additive: float        # cost_upper <= ratio * cost_lower + sandwich_additive
    additive_bound: float           # cost_upper <= (1 + epsilon) OPT + additive_bound
    cost_lower: float
    cost_upper: float
    sandwich_holds: bool
    flow_certified: bool
    constants: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.sandwich_holds and self.flow_certified

    def as_dict(self):
        out = dict(self.__dict__)
        out["certified"] = self.certified
        return out


def _check_balance(stage, got, want):
    bad = np.abs(np.asarray(got) - np.asarray(want))
    if bad.size and bad.max() > BALANCE_TOL * max(1.0, float(np.sum(want))):
        k = int(np.argmax(bad))
        raise PipelineError(f"{stage}: object {k} carries {got[k]:.15g}, expected {want[k]:.15g}")


def _drop_empty(ps):
    keep = ps.measure > 0
    if keep.all():
        return ps
    idx = np.flatnonzero(keep)
    remap = {int(k): i for i, k in enumerate(idx)}
    regions = {remap[k]: v for k, v in ps.regions.items() if k in remap}
    samples = None
    if ps.samples is not None:
        X, w, off = ps.samples
        parts = [np.arange(off[k], off[k + 1]) for k in idx]
        sel = np.concatenate(parts) if parts else np.zeros(0, dtype=int)
        cnt = np.array([len(p) for p in parts])
        samples = (X[sel], w[sel], np.concatenate([[0], np.cumsum(cnt)]))
    return PieceSet(ps.side, ps.kind, ps.obj[idx], ps.a[idx], ps.b[idx], ps.measure[idx],
                    regions, samples)


def _solve(pp, ps, metric, slack=0.0, delta=0.0):
    """Flow between piece representatives plus the closest-distance optimum.

    Returns (flow, lower).  When the closest-distance matrix is too large
    the lower value falls back to (rep cost - 2 slack) / (1 + delta), which
    is valid when every pair satisfies dmax <= (1 + delta) dmin + 2 slack.
    """
    flow = solve_transportation(pp.measure, ps.measure, supply_pos=pp.rep, demand_pos=ps.rep,
                                metric=metric)
    if len(pp) * len(ps) <= DENSE_LIMIT:
        dmin, _ = piece_extremes(pp, ps, metric)
        lower = solve_transportation(pp.measure, ps.measure, cost=dmin).cost
    else:
        lower = max(0.0, (flow.cost - 2.0 * slack * pp.total()) / (1.0 + delta))
    return flow, lower


def run(scene, cfg=None):
    """Approximate transport plan for ``scene`` (returns a ``TransportPlan``).

    The plan's ``meta`` holds the guarantee record, subdivision reports,
    validation report and timings.
    """
    cfg = cfg or PipelineConfig()
    t_start = time.perf_counter()
    kind, swapped = canonical_kind(scene)
    delta, clamped = delta_for(kind, cfg.epsilon)
    sc = normalize(scene)
    metric = sc.metric
    d = sc.dim
    timings = {}
    meta = {"pair_kind": kind, "swapped": swapped, "delta": delta, "normalized": True}
    if kind.startswith("points-"):
        plan, extra = _run_points(sc, kind, swapped, delta, cfg, metric, d, timings)
    else:
        plan, extra = _run_objects(sc, kind, delta, cfg, metric, d, timings)
    meta.update(extra)
    plan.cost_factor = sc.cost_factor

    f = sc.cost_factor
    ratio = (1.0 + delta) ** 2
    lower, upper = plan.cost_lower, plan.cost_upper
    add_sand = extra["sandwich_additive"]
    holds = upper <= ratio * lower + add_sand + 1e-9 * max(1.0, upper)
    g = Guarantee(kind, cfg.epsilon, delta, clamped, ratio, add_sand * f,
                  extra["additive_bound"] * f, lower * f, upper * f, bool(holds),
                  bool(extra["certified"]), extra.get("constants", {}))
    meta["guarantee"] = g
    if cfg.validate:
        t = time.perf_counter()
        meta["validation"] = validate_plan(plan, sc)
        timings["validate"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t_start
    meta["timings"] = timings
    meta["scene"] = sc
    plan.meta = meta
    log.info("%s: cost in [%.9g, %.9g], estimate %.9g", kind, *plan.costs()[::2], plan.costs()[1])
    return plan


def _run_points(sc, kind, swapped, delta, cfg, metric, d, timings):
    pts_side, obj_side = (sc.S, sc.P) if swapped else (sc.P, sc.S)
    pl, ol = ("S", "P") if swapped else ("P", "S")
    points, weights = pts_side.points, pts_side.weights
    objs = obj_side.objects
    n, m = len(points), len(objs)
    t = time.perf_counter()
    if kind == "points-segments":
        cutoff = delta / (n * m)
        pieces, rep = subdivide_segments_vs_points(points, objs, delta, metric, cutoff=cutoff,
                                                   density=obj_side.density, side=ol,
                                                   max_pieces=cfg.max_pieces)
        near_mass = 2.0 * delta
        consts = {"divisor": 17.0, "approx_solver_divisor": APPROX_SOLVER_DIVISOR[kind],
                  "cutoff": cutoff, "near_mass": near_mass}
    else:
        k = d
        cutoff = delta / (n * m) ** (1.0 / d)
        method = cfg.method
        if method == "auto":
            method = "exact" if d <= 3 else "mc"
        grid = max(sc.longest_edge, cutoff)
        pieces, rep = build_cells_vs_points(points, objs, delta, grid, metric, cutoff=cutoff,
                                            density=obj_side.density, side=ol, method=method,
                                            samples=cfg.samples, seed=cfg.seed,
                                            max_pieces=cfg.max_pieces)
        near_mass = unit_ball_volume(k) * delta ** k
        consts = {"divisor": DELTA_RULES[kind][0], "cutoff": cutoff, "near_mass": near_mass,
                  "method": method}
    timings["subdivide"] = time.perf_counter() - t
    _check_balance("subdivision", pieces.per_object(m), obj_side.measures())
    pieces = _drop_empty(pieces)
    pp = PieceSet.from_points(pl, points, weights)
    P, S = (pieces, pp) if swapped else (pp, pieces)
    t = time.perf_counter()
    flow, lower = _solve(P, S, metric)
    timings["flow"] = time.perf_counter() - t
    t = time.perf_counter()
    plan = assemble_plan(flow, P, S, None, metric, cfg.order, lower_flow_cost=lower)
    timings["lift"] = time.perf_counter() - t
    sandwich = near_mass * cutoff * (2.0 + delta)
    div = DELTA_RULES[kind][0]
    # (1 + delta)^2 <= 1 + div * delta for the capped deltas, so no additive term
    extra = {"sandwich_additive": sandwich, "additive_bound": sandwich,
             "certified": flow.certified, "constants": consts,
             "subdivision": [rep.as_dict()], "pieces": (len(P), len(S)),
             "flow": {"iterations": flow.iterations, "slack_violation": flow.max_slack_violation,
                      "gap": flow.dual_gap}}
    consts["guarantee_factor"] = 1.0 + div * delta
    return plan, extra


def _run_objects(sc, kind, delta, cfg, metric, d, timings):
    P, S = sc.P.objects, sc.S.objects
    n, m = len(P), len(S)
    t = time.perf_counter()
    consts = {"divisor": 3.0}
    if kind == "segments-segments":
        kappa = delta / (n * m)
        if cfg.kappa is not None:
            kappa = cfg.kappa / sc.scale_factor
        M = greedy_match_segments(P, S, kappa, metric, sc.P.density, sc.S.density)
        timings["prematch"] = time.perf_counter() - t
        t = time.perf_counter()
        rp, rs = _drop_empty(M.residual_p), _drop_empty(M.residual_s)
        if len(rp) and len(rs):
            pp, ps, reps = subdivide_segments_vs_segments(rp, rs, delta, metric,
                                                          clearance=min(M.clearance, kappa),
                                                          max_pieces=cfg.max_pieces)
        else:
            pp, ps, reps = rp, rs, []
        slack = 0.0
    else:
        g = grid_cell_size(delta, n, m, d)
        method = cfg.method
        if method == "auto":
            method = "exact" if d <= 3 else "mc"
        M = greedy_match_grid(P, S, g, metric, sc.P.density, sc.S.density, method=method,
                              samples=cfg.samples, seed=cfg.seed)
        kappa = M.kappa
        timings["prematch"] = time.perf_counter() - t
        t = time.perf_counter()
        rp, rs = _drop_empty(M.residual_p), _drop_empty(M.residual_s)
        # nudged up so blocks whose diameter equals it exactly still stop
        slack = cfg.cell_cutoff_factor * math.sqrt(d) * delta / (n * m) ** (1.0 / d) * (1 + 1e-9)
        if len(rp) and len(rs):
            pp, ps, reps = build_cells_vs_cells(rp, rs, delta, metric, clearance=M.clearance,
                                                cutoff=slack, max_pieces=cfg.max_pieces)
        else:
            pp, ps, reps = rp, rs, []
        consts.update({"grid": g, "method": method, "cell_cutoff": slack})
    timings["subdivide"] = time.perf_counter() - t
    consts["kappa"] = kappa
    pp, ps = _drop_empty(pp), _drop_empty(ps)
    got_p = pp.per_object(n) + np.bincount(M.src.obj, weights=M.mass, minlength=n)[:n]
    got_s = ps.per_object(m) + np.bincount(M.dst.obj, weights=M.mass, minlength=m)[:m]
    _check_balance("matching/subdivision (P)", got_p, sc.P.measures())
    _check_balance("matching/subdivision (S)", got_s, sc.S.measures())
    t = time.perf_counter()
    if len(pp) and len(ps):
        flow, lower = _solve(pp, ps, metric, slack, delta)
        certified = flow.certified
        info = {"iterations": flow.iterations, "slack_violation": flow.max_slack_violation,
                "gap": flow.dual_gap}
    else:
        flow, lower, certified, info = _empty_flow(), 0.0, True, {}
    timings["flow"] = time.perf_counter() - t
    t = time.perf_counter()
    plan = assemble_plan(flow, pp, ps, M, metric, cfg.order, lower_flow_cost=lower)
    timings["lift"] = time.perf_counter() - t
    residual_mass = pp.total()
    # residual pairs: dmax <= (1 + delta) dmin + 2 slack
    sandwich = M.cost_upper() + (4.0 + 2.0 * delta) * slack * residual_mass
    additive = (2.0 + 2.0 * delta + delta ** 2) * kappa + (4.0 + 2.0 * delta) * slack
    consts["matched_mass"] = M.total_matched_mass
    extra = {"sandwich_additive": sandwich, "additive_bound": additive, "certified": certified,
             "constants": consts, "subdivision": [r.as_dict() for r in reps],
             "pieces": (len(pp), len(ps)), "flow": info,
             "matched": {"pairs": len(M), "mass": M.total_matched_mass, "kappa": kappa,
                         "clearance": M.clearance},
             "residual_flow_cost": float(flow.cost)}
    return plan, extra


def _empty_flow():
    from .flowsolve import DiscreteFlow
    z = np.zeros(0)
    return DiscreteFlow(np.zeros(0, dtype=int), np.zeros(0, dtype=int), z, 0.0, z, z, 0, True,
                        0.0, 0.0)
