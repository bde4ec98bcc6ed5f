"""Shortest paths, minimal pick sequences and the picking-frequency rate.

Distances are computed on the uniform-weight route graph, so every path
length is a repeated sum of ``cell_size``; distances are accumulated by
repeated addition (never ``hops * cell_size``) to keep float results
identical across independent algorithms.

Shortest-path ties are broken toward the lexicographically smallest node-id
sequence: distances come from a single-source pass anchored at the target,
then the path is walked greedily from the start picking the smallest
feasible neighbor.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core.model import SimParams
from .core.routegraph import Node, RouteGraph
from .errors import UnreachableError

N_EXACT_DEFAULT = 8
TWO_OPT_CAP = 1000


def hops_field(graph: RouteGraph, source: Node) -> Dict[Node, int]:
    """Hop counts from ``source`` to every reachable node (cached per graph)."""
    cached = graph._dist_cache.get(source)
    if cached is not None:
        return cached
    if source not in graph:
        raise UnreachableError(f"node {source} not in graph")
    dist: Dict[Node, int] = {source: 0}
    heap: List[Tuple[int, Node]] = [(0, source)]
    neighbors = graph.neighbors
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, 1 << 60):
            continue
        nd = d + 1
        for v in neighbors[u]:
            if nd < dist.get(v, 1 << 60):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    graph._dist_cache[source] = dist
    return dist


def accumulate_meters(hops: int, cell_size: float) -> float:
    total = 0.0
    for _ in range(hops):
        total += cell_size
    return total


def shortest_path(graph: RouteGraph, a: Node, b: Node) -> Tuple[float, List[Node]]:
    """Minimum distance and the lexicographically smallest shortest path."""
    if a not in graph:
        raise UnreachableError(f"node {a} not in graph")
    if b not in graph:
        raise UnreachableError(f"node {b} not in graph")
    if a == b:
        return 0.0, [a]
    to_b = hops_field(graph, b)
    if a not in to_b:
        raise UnreachableError(f"{b} unreachable from {a}")
    path = [a]
    cur = a
    remaining = to_b[a]
    while cur != b:
        cur = min(v for v in graph.neighbors[cur] if to_b.get(v, -1) == remaining - 1)
        remaining -= 1
        path.append(cur)
    return accumulate_meters(to_b[a], graph.cell_size), path


@dataclass(frozen=True)
class Route:
    """A depot -> picks -> depot trip."""

    slots: Tuple[str, ...]                     # slot visit order
    nodes: Tuple[Node, ...]                    # full node path, depot to depot
    total_distance: float                      # meters
    aisle_traversal_counts: Dict[int, int]     # aisle index -> entry events
    aisle_pick_counts: Dict[int, int]          # aisle index -> picks made there

    @property
    def picks(self) -> int:
        return len(self.slots)

    def to_dict(self) -> dict:
        return {
            "slots": list(self.slots),
            "nodes": [list(n) for n in self.nodes],
            "total_distance": self.total_distance,
            "aisle_traversal_counts": {str(k): v for k, v in self.aisle_traversal_counts.items()},
            "aisle_pick_counts": {str(k): v for k, v in self.aisle_pick_counts.items()},
        }


def _route_metrics(graph: RouteGraph, path: Sequence[Node], slots: Sequence[str]):
    traversals: Dict[int, int] = {}
    prev_aisle = object()
    for node in path:
        aisle = graph.aisle_of.get(node)
        if aisle is not None and aisle != prev_aisle:
            traversals[aisle] = traversals.get(aisle, 0) + 1
        prev_aisle = aisle
    picks: Dict[int, int] = {}
    for slot in slots:
        aisle = graph.aisle_of.get(graph.pick_nodes[slot])
        if aisle is not None:
            picks[aisle] = picks.get(aisle, 0) + 1
    return traversals, picks


def _assemble_route(graph: RouteGraph, depot: Node, node_order: Sequence[Node],
                    slots_by_node: Dict[Node, List[str]]) -> Route:
    path: List[Node] = [depot]
    for u, v in zip([depot] + list(node_order), list(node_order) + [depot]):
        if u == v:
            continue
        _, leg_path = shortest_path(graph, u, v)
        path.extend(leg_path[1:])
    total = accumulate_meters(len(path) - 1, graph.cell_size)
    slots: List[str] = []
    for node in node_order:
        slots.extend(slots_by_node[node])
    traversals, picks = _route_metrics(graph, path, slots)
    return Route(
        slots=tuple(slots),
        nodes=tuple(path),
        total_distance=total,
        aisle_traversal_counts=traversals,
        aisle_pick_counts=picks,
    )


def _pairwise_hops(graph: RouteGraph, depot: Node, nodes: Sequence[Node]) -> List[List[int]]:
    """Hop matrix over [depot] + nodes; raises if anything is unreachable."""
    points = [depot] + list(nodes)
    fields = [hops_field(graph, p) for p in points]
    m = len(points)
    hops = [[0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            d = fields[j].get(points[i])
            if d is None:
                raise UnreachableError(f"{points[j]} unreachable from {points[i]}")
            hops[i][j] = d
    return hops


def _tour_hops(order: Sequence[int], hops: List[List[int]]) -> int:
    total = hops[0][order[0]]
    for u, v in zip(order, order[1:]):
        total += hops[u][v]
    total += hops[order[-1]][0]
    return total


def _held_karp(hops: List[List[int]], n: int) -> List[int]:
    """Exact minimal tour 0 -> {1..n} -> 0 over the hop matrix."""
    full = 1 << n
    INF = 1 << 60
    dp = [[INF] * n for _ in range(full)]
    parent = [[-1] * n for _ in range(full)]
    for j in range(n):
        dp[1 << j][j] = hops[0][j + 1]
    for mask in range(full):
        for j in range(n):
            cur = dp[mask][j]
            if cur >= INF or not (mask >> j) & 1:
                continue
            for k in range(n):
                if (mask >> k) & 1:
                    continue
                nmask = mask | (1 << k)
                cand = cur + hops[j + 1][k + 1]
                if cand < dp[nmask][k]:
                    dp[nmask][k] = cand
                    parent[nmask][k] = j
    fullmask = full - 1
    best_j, best_cost = 0, INF
    for j in range(n):
        cost = dp[fullmask][j] + hops[j + 1][0]
        if cost < best_cost:
            best_cost, best_j = cost, j
    order = []
    mask, j = fullmask, best_j
    while j != -1:
        order.append(j)
        pj = parent[mask][j]
        mask &= ~(1 << j)
        j = pj
    order.reverse()
    return [k + 1 for k in order]


def _nearest_neighbor(hops: List[List[int]], n: int) -> List[int]:
    unvisited = list(range(1, n + 1))
    order = []
    cur = 0
    while unvisited:
        nxt = min(unvisited, key=lambda j: (hops[cur][j], j))
        order.append(nxt)
        unvisited.remove(nxt)
        cur = nxt
    return order


def _two_opt(order: List[int], hops: List[List[int]], cap: int = TWO_OPT_CAP) -> List[int]:
    """First-improvement 2-opt with a fixed improvement cap."""
    order = list(order)
    n = len(order)
    improvements = 0
    improved = True
    while improved and improvements < cap:
        improved = False
        for i in range(n - 1):
            a = order[i - 1] if i > 0 else 0
            b = order[i]
            for j in range(i + 1, n):
                c = order[j]
                d = order[j + 1] if j + 1 < n else 0
                delta = (hops[a][c] + hops[b][d]) - (hops[a][b] + hops[c][d])
                if delta < 0:
                    order[i:j + 1] = reversed(order[i:j + 1])
                    improvements += 1
                    improved = True
                    break
            if improved:
                break
    return order


def optimize_pick_sequence(graph: RouteGraph, depot: Node, picks: Sequence[str],
                           n_exact: int = N_EXACT_DEFAULT) -> Route:
    """Minimal (or 2-opt improved) depot -> picks -> depot route.

    Exact over all permutations for at most ``n_exact`` distinct pick nodes;
    otherwise nearest-neighbor plus 2-opt, never worse than visiting the
    picks in the given order.
    """
    if not picks:
        raise UnreachableError("picks must be non-empty")
    missing = [s for s in picks if s not in graph.pick_nodes]
    if missing:
        raise UnreachableError(f"slots without pick nodes: {missing}", slots=missing)
    slots_by_node: Dict[Node, List[str]] = {}
    nodes: List[Node] = []
    for slot in picks:
        node = graph.pick_nodes[slot]
        if node not in slots_by_node:
            slots_by_node[node] = []
            nodes.append(node)
        slots_by_node[node].append(slot)

    depot_field = hops_field(graph, depot)
    unreachable = [s for s in picks if graph.pick_nodes[s] not in depot_field]
    if unreachable:
        raise UnreachableError(
            f"slots unreachable from depot: {unreachable}", slots=unreachable
        )

    hops = _pairwise_hops(graph, depot, nodes)
    n = len(nodes)
    if n <= n_exact:
        order = _held_karp(hops, n)
    else:
        given = list(range(1, n + 1))
        candidate = _two_opt(_nearest_neighbor(hops, n), hops)
        if _tour_hops(candidate, hops) > _tour_hops(given, hops):
            candidate = _two_opt(given, hops)
        order = candidate
    node_order = [nodes[i - 1] for i in order]
    return _assemble_route(graph, depot, node_order, slots_by_node)


def route_in_given_order(graph: RouteGraph, depot: Node, picks: Sequence[str]) -> Route:
    """Route that visits pick slots exactly in the order given."""
    if not picks:
        raise UnreachableError("picks must be non-empty")
    slots_by_node: Dict[Node, List[str]] = {}
    node_order: List[Node] = []
    for slot in picks:
        node = graph.pick_nodes[slot]
        if node not in slots_by_node:
            slots_by_node[node] = []
            node_order.append(node)
        slots_by_node[node].append(slot)
    return _assemble_route(graph, depot, node_order, slots_by_node)


@dataclass(frozen=True)
class PickingFrequency:
    """Per-aisle pick rates in picks/hour (single-period model)."""

    rates: Dict[int, float]
    total_hours: float

    def rate(self, aisle: int) -> float:
        return self.rates.get(aisle, 0.0)

    def mean_rate(self, aisle: int) -> float:
        return self.rate(aisle)

    def as_vector(self, num_aisles: int) -> List[float]:
        return [self.rate(i) for i in range(num_aisles)]


def route_time_seconds(route: Route, params: SimParams) -> float:
    return route.total_distance / params.picker_speed + route.picks * params.handle_time


def picking_frequency(routes: Sequence[Route], params: SimParams) -> PickingFrequency:
    """Pick rate per aisle over the total route time."""
    total_seconds = 0.0
    picks: Dict[int, int] = {}
    for route in routes:
        total_seconds += route_time_seconds(route, params)
        for aisle, count in route.aisle_pick_counts.items():
            picks[aisle] = picks.get(aisle, 0) + count
    if total_seconds <= 0.0:
        return PickingFrequency(rates={}, total_hours=0.0)
    hours = total_seconds / 3600.0
    return PickingFrequency(
        rates={aisle: count / hours for aisle, count in sorted(picks.items())},
        total_hours=hours,
    )
