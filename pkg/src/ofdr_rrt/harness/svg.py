"""SVG 1.1 figures of belief trees: mean trajectories, 1-sigma ellipses at
edge endpoints, obstacles, goal region and the best goal path."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ..planner import PlanResult

SVG_NS = "http://www.w3.org/2000/svg"
PANEL = 420
MARGIN = 30
TITLE_H = 24


def _f(v: float) -> str:
    return format(float(v), ".10g")


def ellipse_params(D) -> tuple[float, float, float]:
    """Semi-axes (major, minor) and rotation in degrees of the 1-sigma ellipse of D."""
    D = np.asarray(D, dtype=float)[:2, :2]
    w, V = np.linalg.eigh(0.5 * (D + D.T))
    w = np.clip(w, 0.0, None)
    major = V[:, 1]
    theta = math.degrees(math.atan2(major[1], major[0]))
    return math.sqrt(w[1]), math.sqrt(w[0]), theta


def ellipse_element(parent, center, D, **attrs) -> ET.Element:
    rx, ry, theta = ellipse_params(D)
    cx, cy = _f(center[0]), _f(center[1])
    return ET.SubElement(parent, "ellipse", cx=cx, cy=cy, rx=_f(rx), ry=_f(ry),
                         transform=f"rotate({_f(theta)} {cx} {cy})", **attrs)


def _points(P) -> str:
    return " ".join(f"{_f(x)},{_f(y)}" for x, y in np.asarray(P)[:, :2])


def _panel(parent, result: PlanResult, x0: float, title: str) -> ET.Element:
    sc = result.scenario
    lo, hi = sc.bounds.lo[:2], sc.bounds.hi[:2]
    span = hi - lo
    s = (PANEL - 2 * MARGIN) / float(max(span))
    g = ET.SubElement(parent, "g", {"class": "panel"})
    ET.SubElement(g, "text", x=_f(x0 + PANEL / 2), y=_f(TITLE_H - 6), fill="#222",
                  **{"text-anchor": "middle", "font-family": "sans-serif", "font-size": "14"}).text = title
    tx = x0 + MARGIN - s * lo[0]
    ty = TITLE_H + MARGIN + s * hi[1]
    world = ET.SubElement(g, "g", {"class": "world",
                                   "transform": f"translate({_f(tx)} {_f(ty)}) scale({_f(s)} {_f(-s)})"})
    lw = 1.0 / s

    ET.SubElement(world, "rect", x=_f(lo[0]), y=_f(lo[1]), width=_f(span[0]), height=_f(span[1]),
                  fill="white", stroke="#000", **{"stroke-width": _f(1.5 * lw)})
    goal = sc.goal
    ET.SubElement(world, "rect", {"class": "goal", "x": _f(goal.lo[0]), "y": _f(goal.lo[1]),
                                  "width": _f(goal.hi[0] - goal.lo[0]),
                                  "height": _f(goal.hi[1] - goal.lo[1]),
                                  "fill": "#7bd389", "fill-opacity": "0.6"})
    for name, box in sc.gaps:
        ET.SubElement(world, "rect", {"class": "gap", "x": _f(box.lo[0]), "y": _f(box.lo[1]),
                                      "width": _f(box.hi[0] - box.lo[0]),
                                      "height": _f(box.hi[1] - box.lo[1]), "fill": "none",
                                      "stroke": "#888", "stroke-width": _f(lw),
                                      "stroke-dasharray": f"{_f(3 * lw)} {_f(2 * lw)}"})
    for obs in sc.obstacles:
        V = obs.vertices()
        if len(V):
            ET.SubElement(world, "polygon", {"class": "obstacle", "points": _points(V),
                                             "fill": "#555", "fill-opacity": "0.85"})

    tree = result.tree
    edges = ET.SubElement(world, "g", {"class": "edges", "fill": "none", "stroke": "#3a6ea5",
                                       "stroke-width": _f(0.8 * lw)})
    for node in tree:
        if node.trajectory is not None:
            ET.SubElement(edges, "polyline", points=_points(node.trajectory.positions))
    ells = ET.SubElement(world, "g", {"class": "ellipses", "fill": "none", "stroke": "#d98c1f",
                                      "stroke-width": _f(0.6 * lw)})
    for node in tree:
        ellipse_element(ells, node.x, node.D, id=f"e{node.id}")
    if result.best_path:
        best = ET.SubElement(world, "g", {"class": "best", "fill": "none", "stroke": "#c0392b",
                                          "stroke-width": _f(2.5 * lw)})
        for i in result.best_path[1:]:
            ET.SubElement(best, "polyline", points=_points(tree[i].trajectory.positions))
    root = tree[0].x
    ET.SubElement(world, "circle", cx=_f(root[0]), cy=_f(root[1]), r=_f(4 * lw), fill="#000")
    return g


def _title(result: PlanResult) -> str:
    sc = result.scenario
    cost = "no goal path" if result.best_cost is None else f"cost {result.best_cost:.3f}"
    return f"{sc.risk_mode.value}: {len(result.tree)} nodes, {cost}"


def render(results: list[PlanResult], titles: list[str] | None = None) -> ET.ElementTree:
    titles = titles or [_title(r) for r in results]
    width = PANEL * len(results)
    height = PANEL + TITLE_H
    svg = ET.Element("svg", xmlns=SVG_NS, version="1.1", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    for k, (r, t) in enumerate(zip(results, titles)):
        _panel(svg, r, k * PANEL, t)
    return ET.ElementTree(svg)


def write_svg(results, path, titles=None) -> Path:
    if isinstance(results, PlanResult):
        results = [results]
    path = Path(path)
    tree = render(list(results), titles)
    ET.indent(tree)
    tree.write(path, encoding="utf-8", xml_declaration=True)
    return path
