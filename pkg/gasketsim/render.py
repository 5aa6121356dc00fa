"""SVG renderer for prefractal graphs with rotor, height or odometer overlays.

Pure Python string building; output bytes depend only on the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from gasketsim.core import write_atomic
from gasketsim.errors import RenderError
from gasketsim.graph import PrefractalGraph, build, euclidean_coords
from gasketsim.lattice import DIRECTION_STEPS
from gasketsim.rotor import UNSET, RotorConfig, force_reflecting
from gasketsim.types import Half, OverlayKind, RenderOptions

# Arrow length as a fraction of the edge length
_ARROW_FRACTION = 0.6


@dataclass(frozen=True)
class Overlay:
    """Per-vertex data drawn over the graph."""

    kind: OverlayKind
    values: Optional[np.ndarray] = None

    @classmethod
    def none(cls) -> Overlay:
        return cls(OverlayKind.NONE)

    @classmethod
    def rotors(cls, config: RotorConfig) -> Overlay:
        return cls(OverlayKind.ROTORS, config.indices)

    @classmethod
    def heights(cls, heights: np.ndarray) -> Overlay:
        return cls(OverlayKind.HEIGHTS, np.asarray(heights, dtype=np.int64))

    @classmethod
    def odometer(cls, odometer: np.ndarray) -> Overlay:
        return cls(OverlayKind.ODOMETER, np.asarray(odometer, dtype=np.float64))


def _fmt(x: float) -> str:
    text = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _mix(color: str, t: float) -> str:
    """Blend white toward ``color`` by t in [0, 1]."""
    r, g, b = (int(color[i : i + 2], 16) for i in (1, 3, 5))
    mixed = (round(255 + (c - 255) * t) for c in (r, g, b))
    return "#" + "".join(f"{c:02x}" for c in mixed)


class SvgBuilder:
    """Builds SVG documents for a graph and an optional overlay."""

    def __init__(self, options: Optional[RenderOptions] = None) -> None:
        self.options = options or RenderOptions()

    def build(self, graph: PrefractalGraph, overlay: Optional[Overlay] = None) -> str:
        """Render ``graph`` with ``overlay``.

        Sections, in order: header, edges, vertices, rotor arrows, footer.

        Raises:
            RenderError: If the overlay does not cover exactly the graph's vertices.
        """
        overlay = overlay or Overlay.none()
        self._check_overlay(graph, overlay)
        points = self._project(graph)

        parts: list[str] = []
        parts.append(self._render_header())
        parts.append(self._render_edges(graph, points))
        parts.append(self._render_vertices(graph, points, overlay))
        if overlay.kind is OverlayKind.ROTORS:
            parts.append(self._render_rotors(graph, points, overlay.values))
        parts.append("</svg>\n")
        return "".join(parts)

    # ── Geometry ─────────────────────────────────────────────────────

    def _check_overlay(self, graph: PrefractalGraph, overlay: Overlay) -> None:
        if overlay.kind is OverlayKind.NONE:
            return
        if overlay.values is None or overlay.values.shape != (len(graph),):
            raise RenderError(
                f"{overlay.kind.value} overlay does not match the {len(graph)} graph vertices"
            )

    def _project(self, graph: PrefractalGraph) -> np.ndarray:
        opts = self.options
        xy = euclidean_coords(graph) * opts.scale
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        # SVG y grows downward
        x = xy[:, 0] - lo[0] + opts.margin
        y = hi[1] - xy[:, 1] + opts.margin
        self._size = (hi[0] - lo[0] + 2 * opts.margin, hi[1] - lo[1] + 2 * opts.margin)
        return np.stack([x, y], axis=1)

    # ── Sections ─────────────────────────────────────────────────────

    def _render_header(self) -> str:
        width, height = (_fmt(v) for v in self._size)
        opts = self.options
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            '<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" '
            'markerWidth="6" markerHeight="6" orient="auto-start-reverse">'
            f'<path d="M 0 0 L 10 5 L 0 10 z" fill="{opts.rotor_color}"/></marker></defs>\n'
            '<rect width="100%" height="100%" fill="white"/>\n'
        )

    def _render_edges(self, graph: PrefractalGraph, points: np.ndarray) -> str:
        opts = self.options
        lines = [f'<g stroke="{opts.edge_color}" stroke-width="{_fmt(opts.stroke_width)}">\n']
        for i, j in graph.edges.tolist():
            x1, y1 = points[i]
            x2, y2 = points[j]
            lines.append(
                f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"/>\n'
            )
        lines.append("</g>\n")
        return "".join(lines)

    def _vertex_fills(self, overlay: Overlay, count: int) -> list[str]:
        opts = self.options
        if overlay.kind is OverlayKind.HEIGHTS:
            palette = opts.palette
            return [
                palette[h] if 0 <= h < len(palette) else opts.overflow_color
                for h in overlay.values.tolist()
            ]
        if overlay.kind is OverlayKind.ODOMETER:
            values = np.maximum(overlay.values, 0.0)
            top = math.log1p(float(values.max())) if len(values) else 0.0
            scale = [math.log1p(v) / top if top > 0 else 0.0 for v in values.tolist()]
            return [_mix(opts.odometer_color, t) for t in scale]
        return ["#000000"] * count

    def _render_vertices(self, graph: PrefractalGraph, points: np.ndarray, overlay: Overlay) -> str:
        opts = self.options
        fills = self._vertex_fills(overlay, len(graph))
        radius = _fmt(opts.vertex_radius)
        lines = [f'<g stroke="{opts.edge_color}" stroke-width="{_fmt(opts.stroke_width / 2)}">\n']
        for (x, y), fill, (a, b) in zip(points.tolist(), fills, graph.coords.tolist()):
            lines.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{radius}" fill="{fill}">'
                f"<title>{a},{b}</title></circle>\n"
            )
        lines.append("</g>\n")
        return "".join(lines)

    def _render_rotors(self, graph: PrefractalGraph, points: np.ndarray, rotors: np.ndarray) -> str:
        opts = self.options
        lines = [
            f'<g stroke="{opts.rotor_color}" stroke-width="{_fmt(opts.stroke_width * 1.5)}" '
            'marker-end="url(#arrow)">\n'
        ]
        length = _ARROW_FRACTION * opts.scale
        for i in np.flatnonzero(rotors != UNSET).tolist():
            dx, dy = DIRECTION_STEPS[int(graph.directions[i, rotors[i]])]
            # unit step in screen space
            ex, ey = dx + dy / 2.0, -dy * math.sqrt(3.0) / 2.0
            x, y = points[i]
            lines.append(
                f'<line x1="{_fmt(x)}" y1="{_fmt(y)}" '
                f'x2="{_fmt(x + ex * length)}" y2="{_fmt(y + ey * length)}"/>\n'
            )
        lines.append("</g>\n")
        return "".join(lines)


def render_svg(
    graph: PrefractalGraph,
    overlay: Optional[Overlay] = None,
    path: Optional[Path | str] = None,
    options: Optional[RenderOptions] = None,
) -> str:
    """Render to an SVG string and, if ``path`` is given, write it atomically."""
    svg = SvgBuilder(options).build(graph, overlay)
    if path is not None:
        write_atomic(Path(path), svg)
    return svg


FIGURES = ("reflecting-s2",)


def figure_preset(name: str) -> tuple[PrefractalGraph, Overlay]:
    """Named render presets.

    ``reflecting-s2``: SG_2 with the corner rotors that make S_2 reflecting.
    """
    if name != "reflecting-s2":
        raise RenderError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    graph = build(2, Half.BOTH)
    rotors = force_reflecting(graph, RotorConfig(graph), 2)
    return graph, Overlay.rotors(rotors)
