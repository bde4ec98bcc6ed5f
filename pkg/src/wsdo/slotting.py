"""Product clustering, slot assignment and budgeted reassignment.

Products are clustered on (pick frequency, mean order size, co-pick breadth)
with seeded k-means++; slots are ranked by walking distance from the depot
and handed out cluster by cluster, hottest first.  A proposed re-slotting is
gated move by move against a cost budget, greedily by benefit per cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core.model import Layout, Order, Product, SlotAssignment
from .core.routegraph import RouteGraph
from .errors import CapacityError, ValidationError
from .routing import accumulate_meters, hops_field


@dataclass
class ProductFeatures:
    """Per-product feature matrix, column-standardized to zero mean, unit variance."""

    product_ids: List[str]
    matrix: np.ndarray           # shape (n_products, 3)
    pick_counts: Dict[str, int]  # raw line counts per product


def pick_counts(history: Sequence[Order]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for order in history:
        for pid, _ in order.lines:
            counts[pid] = counts.get(pid, 0) + 1
    return counts


def build_product_features(catalog: Sequence[Product], history: Sequence[Order]) -> ProductFeatures:
    ids = [p.id for p in catalog]
    counts = pick_counts(history)
    order_sizes: Dict[str, List[int]] = {pid: [] for pid in ids}
    partners: Dict[str, set] = {pid: set() for pid in ids}
    for order in history:
        members = [pid for pid, _ in order.lines]
        for pid in members:
            if pid in order_sizes:
                order_sizes[pid].append(len(order.lines))
                partners[pid].update(m for m in members if m != pid)
    n = len(ids)
    raw = np.zeros((n, 3))
    for i, pid in enumerate(ids):
        raw[i, 0] = counts.get(pid, 0)
        raw[i, 1] = float(np.mean(order_sizes[pid])) if order_sizes[pid] else 0.0
        raw[i, 2] = len(partners[pid]) / max(1, n - 1)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std[std == 0.0] = 1.0
    return ProductFeatures(product_ids=ids, matrix=(raw - mean) / std, pick_counts=counts)


@dataclass
class Clustering:
    k: int
    assignment: Dict[str, int]      # product id -> cluster id
    centroids: np.ndarray           # shape (k, dim)
    inertia: float
    inertia_history: List[float] = field(default_factory=list)
    iterations: int = 0

    def members(self, cluster: int) -> List[str]:
        return [pid for pid, c in self.assignment.items() if c == cluster]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "assignment": dict(self.assignment),
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "iterations": self.iterations,
        }

    @staticmethod
    def from_dict(d: dict) -> "Clustering":
        return Clustering(
            k=int(d["k"]),
            assignment={p: int(c) for p, c in d["assignment"].items()},
            centroids=np.asarray(d["centroids"], dtype=float),
            inertia=float(d["inertia"]),
            iterations=int(d.get("iterations", 0)),
        )


def _as_matrix(features) -> Tuple[np.ndarray, List[str]]:
    if isinstance(features, ProductFeatures):
        return features.matrix, features.product_ids
    m = np.atleast_2d(np.asarray(features, dtype=float))
    if m.shape[0] == 1 and m.shape[1] > 1 and np.asarray(features).ndim == 1:
        m = m.T
    return m, [str(i) for i in range(m.shape[0])]


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans_cluster(features, k: int, seed: int, max_iter: int = 300) -> Clustering:
    """Seeded k-means++ with Lloyd iterations to an assignment fixpoint.

    An empty cluster is re-seeded at the point farthest from its assigned
    centroid (deterministic: lowest index wins ties).
    """
    X, ids = _as_matrix(features)
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ValidationError(f"k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(X, k, rng)
    labels = np.zeros(n, dtype=int)
    history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        row = np.arange(n)
        for j in range(k):
            if not np.any(new_labels == j):
                farthest = int(np.argmax(d2[row, new_labels]))
                centroids[j] = X[farthest]
                d2[:, j] = np.sum((X - centroids[j]) ** 2, axis=1)
                new_labels = np.argmin(d2, axis=1)
        history.append(float(np.sum(d2[row, new_labels])))
        converged = bool(np.array_equal(new_labels, labels)) and iterations > 1
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if np.any(mask):
                centroids[j] = X[mask].mean(axis=0)
        if converged:
            break
    d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    inertia = float(np.sum(d2[np.arange(n), labels]))
    return Clustering(
        k=k,
        assignment={pid: int(c) for pid, c in zip(ids, labels)},
        centroids=centroids,
        inertia=inertia,
        inertia_history=history,
        iterations=iterations,
    )


def slot_depot_distances(layout: Layout, graph: RouteGraph) -> Dict[str, float]:
    """Walking distance from the depot to every slot's pick node."""
    field_ = hops_field(graph, graph.depot_node)
    out = {}
    for slot_id, node in graph.pick_nodes.items():
        hops = field_.get(node)
        out[slot_id] = accumulate_meters(hops, graph.cell_size) if hops is not None else float("inf")
    return out


def assign_slots(clustering: Clustering, layout: Layout, graph: RouteGraph,
                 history: Sequence[Order]) -> SlotAssignment:
    """Greedy frequency slotting: hot clusters get the slots closest to the depot."""
    products = list(clustering.assignment)
    slots = layout.slot_ids()
    if len(products) > len(slots):
        raise CapacityError(f"{len(products)} products exceed {len(slots)} slots")
    counts = pick_counts(history)
    cluster_freq: Dict[int, int] = {c: 0 for c in range(clustering.k)}
    for pid, c in clustering.assignment.items():
        cluster_freq[c] += counts.get(pid, 0)
    distances = slot_depot_distances(layout, graph)
    ranked_slots = sorted(slots, key=lambda s: (distances[s], s))
    ranked_clusters = sorted(range(clustering.k), key=lambda c: (-cluster_freq[c], c))
    mapping: Dict[str, str] = {}
    cursor = 0
    for c in ranked_clusters:
        members = sorted(clustering.members(c), key=lambda p: (-counts.get(p, 0), p))
        for pid in members:
            mapping[pid] = ranked_slots[cursor]
            cursor += 1
    return SlotAssignment(mapping)


def weighted_mean_depot_distance(assignment: SlotAssignment, graph: RouteGraph,
                                 history: Sequence[Order]) -> float:
    """Pick-frequency-weighted mean distance from depot to assigned slots."""
    counts = pick_counts(history)
    field_ = hops_field(graph, graph.depot_node)
    total_w = 0.0
    total = 0.0
    # sorted iteration keeps the float sum identical across dict orderings
    for pid, slot in sorted(assignment.mapping.items()):
        w = counts.get(pid, 0)
        if w == 0:
            continue
        node = graph.pick_nodes[slot]
        hops = field_.get(node)
        if hops is None:
            continue
        total += w * accumulate_meters(hops, graph.cell_size)
        total_w += w
    return total / total_w if total_w else 0.0


@dataclass
class Move:
    product: str
    from_slot: str
    to_slot: str
    benefit: float          # meters saved per history replay
    cost: float
    accepted: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "product": self.product, "from_slot": self.from_slot, "to_slot": self.to_slot,
            "benefit": self.benefit, "cost": self.cost,
            "accepted": self.accepted, "reason": self.reason,
        }


@dataclass
class ReassignmentPlan:
    moves: List[Move]
    budget: float
    total_cost: float
    total_benefit: float

    def accepted_moves(self) -> List[Move]:
        return [m for m in self.moves if m.accepted]

    def apply(self, current: SlotAssignment) -> SlotAssignment:
        mapping = dict(current.mapping)
        for m in self.accepted_moves():
            mapping[m.product] = m.to_slot
        return SlotAssignment(mapping)

    def to_dict(self) -> dict:
        return {
            "moves": [m.to_dict() for m in self.moves],
            "budget": self.budget,
            "total_cost": self.total_cost,
            "total_benefit": self.total_benefit,
        }


def evaluate_reassignment(current: SlotAssignment, proposed: SlotAssignment,
                          history: Sequence[Order], graph: RouteGraph,
                          move_cost: float, budget: float) -> ReassignmentPlan:
    """Gate proposed relocations by benefit/cost under a total budget.

    Per-move benefit is the reduction in frequency-weighted depot distance of
    the relocated product.  Moves are taken greedily by benefit/cost; a move
    is only feasible while its target slot is free or was vacated earlier.
    Moves with non-positive benefit are never accepted.
    """
    counts = pick_counts(history)
    field_ = hops_field(graph, graph.depot_node)

    def depot_distance(slot: str) -> float:
        hops = field_.get(graph.pick_nodes[slot])
        return accumulate_meters(hops, graph.cell_size) if hops is not None else float("inf")

    moves: List[Move] = []
    for pid in sorted(current.mapping):
        from_slot = current.mapping[pid]
        to_slot = proposed.mapping.get(pid, from_slot)
        if to_slot == from_slot:
            continue
        freq = counts.get(pid, 0)
        benefit = freq * (depot_distance(from_slot) - depot_distance(to_slot))
        moves.append(Move(product=pid, from_slot=from_slot, to_slot=to_slot,
                          benefit=benefit, cost=move_cost))

    moves.sort(key=lambda m: (-(m.benefit / m.cost if m.cost > 0 else m.benefit), m.product))
    occupied = set(current.mapping.values())
    spent = 0.0
    gained = 0.0
    for m in moves:
        if m.benefit <= 0.0:
            m.reason = "non-positive-benefit"
            continue
        if spent + m.cost > budget:
            m.reason = "over-budget"
            continue
        if m.to_slot in occupied:
            m.reason = "target-occupied"
            continue
        m.accepted = True
        m.reason = "accepted"
        occupied.discard(m.from_slot)
        occupied.add(m.to_slot)
        spent += m.cost
        gained += m.benefit
    return ReassignmentPlan(moves=moves, budget=budget, total_cost=spent, total_benefit=gained)
