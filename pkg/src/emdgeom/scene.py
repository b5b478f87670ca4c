"""Scene model: two mass distributions, file ingestion, validation and
normalization to unit total mass per side."""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import MAX_DIM, simplex_measure

KINDS = ("points", "segments", "triangles", "simplices")
IMBALANCE_TOL = 1e-6


class SceneError(ValueError):
    """Raised for malformed or invalid scene input."""


@dataclass(frozen=True)
class MassSide:
    """One side of a scene.

    ``points``/``weights`` are used by point sides; ``objects`` is an
    (count, vertices, d) array for segment/triangle/simplex sides.
    """
    kind: str
    points: np.ndarray = None
    weights: np.ndarray = None
    objects: np.ndarray = None
    density: float = 1.0

    @property
    def is_points(self):
        return self.kind == "points"

    @property
    def count(self):
        return len(self.points) if self.is_points else len(self.objects)

    @property
    def intrinsic_dim(self):
        return 0 if self.is_points else self.objects.shape[1] - 1

    def measures(self):
        if self.is_points:
            return self.weights.copy()
        return self.density * np.array([simplex_measure(o) for o in self.objects])

    def total_mass(self):
        return float(self.measures().sum())

    def coords(self):
        return self.points if self.is_points else self.objects.reshape(-1, self.objects.shape[-1])

    def scaled(self, coord_scale, mass_scale=1.0):
        if self.is_points:
            return replace(self, points=self.points * coord_scale, weights=self.weights * mass_scale)
        return replace(self, objects=self.objects * coord_scale)

    def unit_mass(self):
        """Rescale weights (points) or density (objects) to total mass exactly one."""
        if self.is_points:
            return replace(self, weights=self.weights / self.weights.sum())
        return replace(self, density=self.density / self.total_mass())

    def longest_edge(self):
        if self.is_points:
            return 0.0
        O = self.objects
        best = 0.0
        for i in range(O.shape[1]):
            for j in range(i + 1, O.shape[1]):
                best = max(best, float(np.linalg.norm(O[:, i] - O[:, j], axis=1).max()))
        return best


@dataclass(frozen=True)
class MassScene:
    P: MassSide
    S: MassSide
    metric: str = "l2"
    dim: int = 2
    scale_factor: float = 1.0
    mass_factor: float = 1.0
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def cost_factor(self):
        """Multiplier mapping a normalized cost back to input units."""
        return self.scale_factor * self.mass_factor

    @property
    def longest_edge(self):
        return max(self.P.longest_edge(), self.S.longest_edge())

    @property
    def pair_kind(self):
        return f"{self.P.kind}-{self.S.kind}"

    def sides(self):
        return (self.P, self.S)


# ------------------------------------------------------------------ parsing

def _parse_side(raw, name, d):
    if not isinstance(raw, dict):
        raise SceneError(f"field '{name}' must be an object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise SceneError(f"field '{name}.kind' must be one of {', '.join(KINDS)}, got {kind!r}")
    items = raw.get("items")
    if not isinstance(items, list) or not items:
        raise SceneError(f"field '{name}.items' must be a non-empty list")
    if kind == "points":
        pos, mass = [], []
        for i, it in enumerate(items):
            try:
                p = np.asarray(it["pos"], dtype=float)
                w = float(it["mass"])
            except (KeyError, TypeError, ValueError):
                raise SceneError(f"field '{name}.items[{i}]' must have numeric 'pos' and 'mass'")
            if p.shape != (d,):
                raise SceneError(f"field '{name}.items[{i}].pos' must have {d} coordinates")
            if not np.all(np.isfinite(p)) or not math.isfinite(w) or w <= 0:
                raise SceneError(f"field '{name}.items[{i}]' needs finite coordinates and mass > 0")
            pos.append(p)
            mass.append(w)
        return MassSide("points", points=np.array(pos), weights=np.array(mass))
    nverts = {"segments": 2, "triangles": 3, "simplices": d + 1}[kind]
    if kind == "triangles" and d != 2:
        raise SceneError(f"field '{name}.kind': triangles are supported in dimension 2 only "
                         "(use 'simplices' for full-dimensional simplices)")
    objs = []
    for i, it in enumerate(items):
        try:
            V = np.asarray(it, dtype=float)
        except (TypeError, ValueError):
            raise SceneError(f"field '{name}.items[{i}]' must be a numeric vertex array")
        if V.shape != (nverts, d):
            raise SceneError(f"field '{name}.items[{i}]' must be a {nverts}x{d} vertex array")
        if not np.all(np.isfinite(V)):
            raise SceneError(f"field '{name}.items[{i}]' has non-finite coordinates")
        try:
            simplex_measure(V)
        except ValueError:
            raise SceneError(f"degenerate object at index {i} in '{name}'")
        objs.append(V)
    return MassSide(kind, objects=np.array(objs))


def parse_scene(data, rebalance=False):
    """Build a validated (not yet normalized) scene from a decoded JSON dict."""
    if not isinstance(data, dict):
        raise SceneError("scene must be a JSON object")
    metric = data.get("metric", "l2")
    if metric not in ("l1", "l2"):
        raise SceneError(f"field 'metric' must be 'l1' or 'l2', got {metric!r}")
    d = data.get("dimension")
    if not isinstance(d, int) or not 1 <= d <= MAX_DIM:
        raise SceneError(f"field 'dimension' must be an integer in [1, {MAX_DIM}]")
    for key in ("P", "S"):
        if key not in data:
            raise SceneError(f"missing field '{key}'")
    P = _parse_side(data["P"], "P", d)
    S = _parse_side(data["S"], "S", d)
    P, S = _balance(P, S, rebalance)
    return MassScene(P, S, metric=metric, dim=d)


def _balance(P, S, rebalance):
    mp, ms = P.total_mass(), S.total_mass()
    if abs(mp - ms) <= IMBALANCE_TOL * max(mp, ms):
        return P, S
    if not rebalance:
        raise SceneError(f"unbalanced mass: P has {mp:.12g}, S has {ms:.12g} (use --rebalance for point sides)")
    if S.is_points:
        return P, replace(S, weights=S.weights * (mp / ms))
    if P.is_points:
        return replace(P, weights=P.weights * (ms / mp)), S
    raise SceneError("unbalanced mass: object measures are geometric and cannot be rebalanced")


def load_scene(path_or_text, rebalance=False):
    """Parse a scene from a file path or a JSON string."""
    text = path_or_text
    if not str(path_or_text).lstrip().startswith("{"):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"invalid JSON: {exc}")
    return parse_scene(data, rebalance=rebalance)


def normalize(scene):
    """Scale so both sides carry total mass one.

    Object sides are normalized by uniform coordinate scaling (density stays
    one); point weights are divided by the input total mass.  Applying it to
    an already normalized scene changes nothing.
    """
    if scene.normalized:
        return scene
    # an object side fixes the coordinate scale; any sub-tolerance imbalance
    # is absorbed into the other side's weights or density
    ref = scene.S if scene.P.is_points else scene.P
    total = ref.total_mass()
    k = ref.intrinsic_dim
    coord_scale = total ** (-1.0 / k) if k > 0 else 1.0
    P = scene.P.scaled(coord_scale).unit_mass()
    S = scene.S.scaled(coord_scale).unit_mass()
    return replace(scene, P=P, S=S, scale_factor=scene.scale_factor / coord_scale,
                   mass_factor=scene.mass_factor * total, normalized=True)


def scene_to_dict(scene):
    def side(s):
        if s.is_points:
            items = [{"pos": p.tolist(), "mass": float(w)} for p, w in zip(s.points, s.weights)]
        else:
            items = [o.tolist() for o in s.objects]
        return {"kind": s.kind, "items": items}
    return {"metric": scene.metric, "dimension": scene.dim, "P": side(scene.P), "S": side(scene.S)}
