"""Deterministic SVG drawings of trees, lattices and fans.

Stages run along the x axis and (first-coordinate) states along the y axis.
Edge width grows with the conditional probability; zero-probability edges are
dashed.  Output depends only on the input object.
"""

from __future__ import annotations

import numpy as np

from .core import ScenarioLattice, ScenarioTree, TrajectoryFan

WIDTH, HEIGHT, MARGIN = 640, 400, 40


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, T: int, lo: float, hi: float, title: str):
        self.T = T
        self.lo, self.hi = (lo - 0.5, hi + 0.5) if hi - lo < 1e-12 else (lo, hi)
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f"<title>{title}</title>",
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        ]
        for t in range(T):
            x = self.x(t)
            self.parts.append(
                f'<line x1="{_fmt(x)}" y1="{HEIGHT - MARGIN + 4}" x2="{_fmt(x)}" '
                f'y2="{HEIGHT - MARGIN + 8}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN + 22}" font-size="11" '
                f'text-anchor="middle">{t + 1}</text>'
            )

    def x(self, t: int) -> float:
        return MARGIN + (WIDTH - 2 * MARGIN) * (t / max(self.T - 1, 1))

    def y(self, v: float) -> float:
        return HEIGHT - MARGIN - (HEIGHT - 2 * MARGIN) * (v - self.lo) / (self.hi - self.lo)

    def edge(self, t0, v0, t1, v1, p: float) -> None:
        if p > 0:
            style = f'stroke="steelblue" stroke-width="{_fmt(0.5 + 4.0 * p)}"'
        else:
            style = 'stroke="gray" stroke-width="0.50" stroke-dasharray="4,3"'
        self.parts.append(
            f'<line x1="{_fmt(self.x(t0))}" y1="{_fmt(self.y(v0))}" '
            f'x2="{_fmt(self.x(t1))}" y2="{_fmt(self.y(v1))}" {style}/>'
        )

    def node(self, t, v) -> None:
        self.parts.append(
            f'<circle cx="{_fmt(self.x(t))}" cy="{_fmt(self.y(v))}" r="2.50" fill="black"/>'
        )

    def polyline(self, values) -> None:
        pts = " ".join(f"{_fmt(self.x(t))},{_fmt(self.y(v))}" for t, v in enumerate(values))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.00"/>'
        )

    def text(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _single_path(tree: ScenarioTree) -> bool:
    return bool(np.all(tree.n_children[:-1] == 1))


def render_svg(obj, path=None) -> str:
    """SVG text for a tree, lattice or fan; written to ``path`` when given."""
    if isinstance(obj, ScenarioTree):
        v = obj.state[:, 0]
        c = _Canvas(obj.T, float(v.min()), float(v.max()), f"scenario tree, {obj.n} nodes")
        if _single_path(obj):
            c.polyline(v)
        else:
            for i in range(1, obj.n):
                j = int(obj.pred[i])
                c.edge(obj.stage[j] - 1, v[j], obj.stage[i] - 1, v[i], float(obj.prob[i]))
        for i in range(obj.n):
            c.node(obj.stage[i] - 1, v[i])
    elif isinstance(obj, ScenarioLattice):
        allv = np.concatenate([s[:, 0] for s in obj.states])
        c = _Canvas(obj.T, float(allv.min()), float(allv.max()),
                    f"scenario lattice, {obj.n_nodes} nodes")
        for t, p in enumerate(obj.trans):
            for i in range(p.shape[0]):
                for j in range(p.shape[1]):
                    c.edge(t, obj.states[t][i, 0], t + 1, obj.states[t + 1][j, 0], float(p[i, j]))
        for t, s in enumerate(obj.states):
            for v in s[:, 0]:
                c.node(t, v)
    elif isinstance(obj, TrajectoryFan):
        d = obj.data[:, :, 0]
        c = _Canvas(obj.T, float(d.min()), float(d.max()), f"trajectory fan, {obj.N} paths")
        for row in d:
            c.polyline(row)
    else:
        raise TypeError(f"cannot render {type(obj).__name__}")
    text = c.text()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
