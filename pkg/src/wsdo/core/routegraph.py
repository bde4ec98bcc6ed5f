"""Walkable-cell route graph built from a layout.

The floor is discretized into square cells of ``cell_size`` meters; cells
overlapping a rack footprint are removed, the rest are connected 4-ways with
uniform edge weight ``cell_size``.  Every slot gets exactly one pick node:
the nearest walkable cell in the slot's column inside the aisle band facing
the rack (front face preferred, then back face).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..errors import DiscretizationError, IsolationError
from .model import GEOM_TOL, Layout

Node = Tuple[int, int]


@dataclass
class RouteGraph:
    cell_size: float
    nx: int
    ny: int
    neighbors: Dict[Node, Tuple[Node, ...]]
    pick_nodes: Dict[str, Node]
    aisle_of: Dict[Node, Optional[int]]
    depot_node: Node
    num_aisles: int
    _dist_cache: Dict[Node, Dict[Node, int]] = field(default_factory=dict, repr=False)

    @property
    def nodes(self):
        return self.neighbors.keys()

    def node_count(self) -> int:
        return len(self.neighbors)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.neighbors.values()) // 2

    def center(self, node: Node) -> Tuple[float, float]:
        return ((node[0] + 0.5) * self.cell_size, (node[1] + 0.5) * self.cell_size)

    def __contains__(self, node: Node) -> bool:
        return node in self.neighbors


def _overlaps(cx0, cy0, cx1, cy1, rx0, ry0, rx1, ry1) -> bool:
    # positive-area intersection; touching boundaries do not count
    return (cx0 < rx1 - GEOM_TOL and cx1 > rx0 + GEOM_TOL
            and cy0 < ry1 - GEOM_TOL and cy1 > ry0 + GEOM_TOL)


def build_route_graph(layout: Layout, cell_size: float) -> RouteGraph:
    """Discretize a layout into a walkable 4-connected grid graph."""
    layout.validate()
    if cell_size <= 0:
        raise DiscretizationError("cell_size must be positive")
    # zero-width gaps are racks touching, not aisles; only real aisles matter here
    open_aisles = [a for a in layout.aisle_widths if a > GEOM_TOL]
    if open_aisles and cell_size > min(open_aisles) + GEOM_TOL:
        raise DiscretizationError(
            f"cell_size {cell_size} exceeds the narrowest aisle "
            f"({min(open_aisles)} m); aisles would be unwalkable"
        )
    cs = cell_size
    nx = int(math.floor(layout.floor_width / cs + GEOM_TOL))
    ny = int(math.floor(layout.floor_depth / cs + GEOM_TOL))
    if nx < 1 or ny < 1:
        raise DiscretizationError("cell_size larger than the floor")

    rects = layout.rack_rects()
    walkable = set()
    for ix in range(nx):
        cx0, cx1 = ix * cs, (ix + 1) * cs
        for iy in range(ny):
            cy0, cy1 = iy * cs, (iy + 1) * cs
            if not any(_overlaps(cx0, cy0, cx1, cy1, *r) for r in rects):
                walkable.add((ix, iy))

    neighbors: Dict[Node, Tuple[Node, ...]] = {}
    for node in sorted(walkable):
        ix, iy = node
        adj = tuple(
            n for n in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1))
            if n in walkable
        )
        neighbors[node] = adj

    bands = layout.aisle_bands()

    def band_of(y: float) -> Optional[int]:
        for i, (lo, hi) in enumerate(bands):
            if lo - GEOM_TOL <= y <= hi + GEOM_TOL:
                return i
        return None

    aisle_of: Dict[Node, Optional[int]] = {}
    for node in neighbors:
        cy = (node[1] + 0.5) * cs
        idx = band_of(cy)
        if idx is not None:
            lo, hi = bands[idx]
            # cells straddling a band boundary belong to no aisle
            if cy - cs / 2 < lo - GEOM_TOL or cy + cs / 2 > hi + GEOM_TOL:
                idx = None
        aisle_of[node] = idx

    rows_sorted = sorted(range(len(layout.rack_rows)), key=lambda i: layout.rack_rows[i].offset)
    band_before = {row_idx: pos for pos, row_idx in enumerate(rows_sorted)}

    def cells_in_band(ix: int, band_idx: int) -> List[Node]:
        lo, hi = bands[band_idx]
        j_lo = max(0, int(math.floor(lo / cs - GEOM_TOL)))
        j_hi = min(ny - 1, int(math.ceil(hi / cs + GEOM_TOL)))
        found = []
        for iy in range(j_lo, j_hi + 1):
            if (ix, iy) in walkable:
                cy = (iy + 0.5) * cs
                if lo - GEOM_TOL <= cy - cs / 2 and cy + cs / 2 <= hi + GEOM_TOL:
                    found.append((ix, iy))
        return found

    pick_nodes: Dict[str, Node] = {}
    isolated = []
    for slot_id in layout.slot_ids():
        row_idx, _ = layout.parse_slot_id(slot_id)
        row = layout.rack_rows[row_idx]
        x_s, _ = layout.slot_center(slot_id)
        ix = min(nx - 1, max(0, int(math.floor(x_s / cs))))
        front_band = band_before[row_idx]
        candidates = cells_in_band(ix, front_band)
        if candidates:
            # closest to the front face = largest y in the front band
            pick_nodes[slot_id] = max(candidates, key=lambda n: n[1])
            continue
        candidates = cells_in_band(ix, front_band + 1)
        if candidates:
            pick_nodes[slot_id] = min(candidates, key=lambda n: n[1])
            continue
        isolated.append(slot_id)
    if isolated:
        raise IsolationError(
            f"{len(isolated)} slot(s) have no adjacent walkable cell, "
            f"first: {isolated[:5]}"
        )

    dx, dy = layout.depot
    depot_cell = (min(nx - 1, max(0, int(math.floor(dx / cs)))),
                  min(ny - 1, max(0, int(math.floor(dy / cs)))))
    if depot_cell in walkable:
        depot_node = depot_cell
    else:
        if not walkable:
            raise IsolationError("no walkable cells at all")
        depot_node = min(
            walkable,
            key=lambda n: (((n[0] + 0.5) * cs - dx) ** 2 + ((n[1] + 0.5) * cs - dy) ** 2, n),
        )

    return RouteGraph(
        cell_size=cs,
        nx=nx,
        ny=ny,
        neighbors=neighbors,
        pick_nodes=pick_nodes,
        aisle_of=aisle_of,
        depot_node=depot_node,
        num_aisles=len(bands),
    )
