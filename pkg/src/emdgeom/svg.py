"""SVG rendering of planar scenes and transport plans."""
import xml.etree.ElementTree as ET

import numpy as np

SIZE = 800.0
MARGIN = 20.0
COLORS = {"P": "#1f77b4", "S": "#d62728"}


class _Frame:
    """Maps scene coordinates to SVG pixels (y axis flipped)."""

    def __init__(self, coords):
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
        self.lo, self.k = lo, (SIZE - 2 * MARGIN) / span
        self.height = (hi[1] - lo[1]) * self.k + 2 * MARGIN
        self.width = (hi[0] - lo[0]) * self.k + 2 * MARGIN

    def __call__(self, p):
        x = MARGIN + (p[0] - self.lo[0]) * self.k
        y = self.height - MARGIN - (p[1] - self.lo[1]) * self.k
        return f"{x:.3f}", f"{y:.3f}"


def _piece(g, frame, kind, a, b, color):
    if kind == "point":
        x, y = frame(a)
        return ET.SubElement(g, "circle", cx=x, cy=y, r="3", fill=color, attrib={"class": "piece"})
    if kind == "subsegment":
        (x1, y1), (x2, y2) = frame(a), frame(b)
        return ET.SubElement(g, "line", x1=x1, y1=y1, x2=x2, y2=y2, stroke=color,
                             attrib={"class": "piece", "stroke-width": "2"})
    (x1, y1), (x2, y2) = frame(a), frame(b)
    x, y = min(float(x1), float(x2)), min(float(y1), float(y2))
    return ET.SubElement(g, "rect", x=f"{x:.3f}", y=f"{y:.3f}",
                         width=f"{abs(float(x2) - float(x1)):.3f}",
                         height=f"{abs(float(y2) - float(y1)):.3f}", fill=color,
                         attrib={"class": "piece", "fill-opacity": "0.25", "stroke": color,
                                 "stroke-width": "0.5"})


def _objects(g, frame, side, name):
    color = COLORS[name]
    if side.is_points:
        for p in side.points:
            x, y = frame(p)
            ET.SubElement(g, "circle", cx=x, cy=y, r="5", fill="none", stroke=color,
                          attrib={"class": "object"})
        return
    for o in side.objects:
        pts = " ".join(",".join(frame(v)) for v in o)
        tag = "polyline" if len(o) == 2 else "polygon"
        ET.SubElement(g, tag, points=pts, fill="none", stroke=color,
                      attrib={"class": "object", "stroke-width": "1", "stroke-opacity": "0.5"})


def plan_svg(plan, scene=None):
    """SVG document (string) with every piece and every assignment of ``plan``.

    Pieces carry ``class="piece"`` and assignments ``class="assignment"``;
    assignments are quadratic arcs between piece centers, width by mass.
    """
    sides = [(plan.pieces_p, "P"), (plan.pieces_s, "S")]
    M = plan.matched
    if M is not None and len(M):
        sides += [(M.src, "P"), (M.dst, "S")]
    coords = [np.r_[ps.a, ps.b] for ps, _ in sides if len(ps)]
    if scene is not None:
        coords += [scene.P.coords(), scene.S.coords()]
    coords = np.concatenate(coords) if coords else np.zeros((1, 2))
    if coords.shape[1] != 2:
        raise ValueError(f"SVG output needs a planar scene, got dimension {coords.shape[1]}")
    frame = _Frame(coords)
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                      width=f"{frame.width:.1f}", height=f"{frame.height:.1f}")
    if scene is not None:
        g = ET.SubElement(root, "g", id="objects")
        _objects(g, frame, scene.P, "P")
        _objects(g, frame, scene.S, "S")
    g = ET.SubElement(root, "g", id="pieces")
    for ps, name in sides:
        for k in range(len(ps)):
            _piece(g, frame, ps.kind, ps.a[k], ps.b[k], COLORS[name])

    pairs = [(plan.pieces_p.rep[plan.rows], plan.pieces_s.rep[plan.cols], plan.mass)]
    if M is not None and len(M):
        pairs.append((M.src.rep, M.dst.rep, M.mass))
    top = max([float(m.max()) for _, _, m in pairs if len(m)] + [1e-300])
    g = ET.SubElement(root, "g", id="assignments", fill="none", stroke="#555555")
    for X, Y, mass in pairs:
        for x, y, m in zip(X, Y, mass):
            mid = 0.5 * (x + y)
            bend = 0.15 * np.array([-(y - x)[1], (y - x)[0]])
            (x0, y0), (cx, cy), (x1, y1) = frame(x), frame(mid + bend), frame(y)
            width = 0.3 + 2.7 * float(m) / top
            ET.SubElement(g, "path", d=f"M {x0} {y0} Q {cx} {cy} {x1} {y1}",
                          attrib={"class": "assignment", "stroke-width": f"{width:.3f}",
                                  "stroke-opacity": "0.6"})
    return ET.tostring(root, encoding="unicode")


def write_svg(plan, path, scene=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan_svg(plan, scene))
        fh.write("\n")
