"""Standalone SVG rendering of a layout and an optional route.

Hand-emitted SVG, no rendering dependency: racks as rectangles, the route
as a polyline over walkable-cell centers, the depot as a circle.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .core.model import Instance, Layout
from .core.routegraph import RouteGraph

SCALE = 24.0       # px per meter
MARGIN = 12.0


def _y_flip(y: float, depth: float) -> float:
    return (depth - y) * SCALE + MARGIN


def _x(x: float) -> float:
    return x * SCALE + MARGIN


def layout_svg(layout: Layout, route_nodes: Optional[Sequence] = None,
               graph: Optional[RouteGraph] = None,
               title: str = "warehouse layout") -> str:
    width_px = layout.floor_width * SCALE + 2 * MARGIN
    depth_px = layout.floor_depth * SCALE + 2 * MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0f}" '
        f'height="{depth_px:.0f}" viewBox="0 0 {width_px:.0f} {depth_px:.0f}">',
        f"<title>{title}</title>",
        f'<rect class="floor" x="{_x(0):.1f}" y="{_y_flip(layout.floor_depth, layout.floor_depth):.1f}" '
        f'width="{layout.floor_width * SCALE:.1f}" height="{layout.floor_depth * SCALE:.1f}" '
        f'fill="#fafafa" stroke="#333" stroke-width="1.5"/>',
    ]
    for i, (x0, y0, x1, y1) in enumerate(layout.rack_rects()):
        parts.append(
            f'<rect class="rack" x="{_x(x0):.1f}" y="{_y_flip(y1, layout.floor_depth):.1f}" '
            f'width="{(x1 - x0) * SCALE:.1f}" height="{(y1 - y0) * SCALE:.1f}" '
            f'fill="#b0bec5" stroke="#455a64" stroke-width="1"/>'
        )
        parts.append(
            f'<text class="rack-label" x="{_x((x0 + x1) / 2):.1f}" '
            f'y="{_y_flip((y0 + y1) / 2, layout.floor_depth) + 4:.1f}" '
            f'font-size="11" text-anchor="middle" fill="#263238">row {i}</text>'
        )
    if route_nodes and graph is not None:
        points = " ".join(
            f"{_x(graph.center(n)[0]):.1f},{_y_flip(graph.center(n)[1], layout.floor_depth):.1f}"
            for n in route_nodes
        )
        parts.append(
            f'<polyline class="route" points="{points}" fill="none" '
            f'stroke="#e53935" stroke-width="2" stroke-linejoin="round"/>'
        )
    dx, dy = layout.depot
    parts.append(
        f'<circle class="depot" cx="{_x(dx):.1f}" cy="{_y_flip(dy, layout.floor_depth):.1f}" '
        f'r="6" fill="#1e88e5" stroke="#0d47a1" stroke-width="1.5"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def instance_svg(instance: Instance, route=None, graph: Optional[RouteGraph] = None) -> str:
    nodes = route.nodes if route is not None else None
    return layout_svg(instance.layout, route_nodes=nodes, graph=graph)
