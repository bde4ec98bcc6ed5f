"""Shift throughput simulation and policy comparison.

A picking day is simulated with an analytic trip-time model: every trip
costs ``distance / picker_speed + picks * handle_time`` seconds, carts run
in parallel up to the aisle-clearance limit, and a trip is only started if
it can finish within the shift.  All policy randomness is seeded, so a
report is a pure function of (instance, bundle, seed).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .core.model import Instance, SlotAssignment, utilization
from .core.routegraph import RouteGraph
from .errors import InfeasibleError, ValidationError
from .layout_opt import LayoutDesign, optimize_layout
from .order_class import build_picklists, parallelism_limit, svm_train, bootstrap_labels, featurize_order
from .pipeline import graph_for, layout_with_widths, rate_vector, sample_orders
from .routing import Route, optimize_pick_sequence, route_in_given_order, route_time_seconds
from .slotting import assign_slots, build_product_features, kmeans_cluster

SLOTTING_POLICIES = ("random", "clustered")
SEQUENCING_POLICIES = ("given-order", "optimized")
BATCHING_POLICIES = ("one-order-per-trip", "svm-batched")
LAYOUT_POLICIES = ("frozen", "optimized")


@dataclass(frozen=True)
class PolicyBundle:
    slotting: str = "random"
    sequencing: str = "given-order"
    batching: str = "one-order-per-trip"
    layout: str = "frozen"

    def __post_init__(self):
        for value, allowed in ((self.slotting, SLOTTING_POLICIES),
                               (self.sequencing, SEQUENCING_POLICIES),
                               (self.batching, BATCHING_POLICIES),
                               (self.layout, LAYOUT_POLICIES)):
            if value not in allowed:
                raise ValidationError(f"policy {value!r} not one of {allowed}")

    def to_dict(self) -> dict:
        return {"slotting": self.slotting, "sequencing": self.sequencing,
                "batching": self.batching, "layout": self.layout}


def baseline_bundle() -> PolicyBundle:
    return PolicyBundle()


def optimized_bundle() -> PolicyBundle:
    return PolicyBundle(slotting="clustered", sequencing="optimized",
                        batching="svm-batched", layout="frozen")


@dataclass
class Trip:
    trip_id: int
    cart: int
    start: float
    end: float
    distance: float
    picks: int
    order_ids: List[str]

    def to_dict(self) -> dict:
        return {"trip_id": self.trip_id, "cart": self.cart, "start": self.start,
                "end": self.end, "distance": self.distance, "picks": self.picks,
                "order_ids": list(self.order_ids)}


@dataclass
class ThroughputReport:
    bundle: dict
    seed: int
    orders_offered: int
    orders_completed: int
    orders_never_started: int
    orders_in_progress_at_cutoff: int
    total_travel_meters: float
    total_busy_seconds: float
    shift_seconds: float
    utilization: float
    parallelism_used: int
    cart_timelines: Dict[int, List[dict]]
    cart_busy_seconds: Dict[int, float]
    aisle_widths: List[float]

    def to_dict(self) -> dict:
        return {
            "bundle": self.bundle,
            "seed": self.seed,
            "orders_offered": self.orders_offered,
            "orders_completed": self.orders_completed,
            "orders_never_started": self.orders_never_started,
            "orders_in_progress_at_cutoff": self.orders_in_progress_at_cutoff,
            "total_travel_meters": self.total_travel_meters,
            "total_busy_seconds": self.total_busy_seconds,
            "shift_seconds": self.shift_seconds,
            "utilization": self.utilization,
            "parallelism_used": self.parallelism_used,
            "cart_timelines": {str(k): v for k, v in self.cart_timelines.items()},
            "cart_busy_seconds": {str(k): v for k, v in self.cart_busy_seconds.items()},
            "aisle_widths": self.aisle_widths,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def summary_row(self) -> Dict[str, object]:
        return {
            "slotting": self.bundle["slotting"],
            "sequencing": self.bundle["sequencing"],
            "batching": self.bundle["batching"],
            "layout": self.bundle["layout"],
            "seed": self.seed,
            "orders_offered": self.orders_offered,
            "orders_completed": self.orders_completed,
            "total_travel_meters": round(self.total_travel_meters, 3),
            "utilization": round(self.utilization, 6),
            "parallelism": self.parallelism_used,
        }


CSV_FIELDS = ["slotting", "sequencing", "batching", "layout", "seed",
              "orders_offered", "orders_completed", "total_travel_meters",
              "utilization", "parallelism"]


def reports_to_csv(reports: Sequence[ThroughputReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.summary_row())
    return buf.getvalue()


def _apply_layout_policy(instance: Instance, bundle: PolicyBundle, a_lb: float):
    if bundle.layout == "frozen":
        return instance.layout
    layout = instance.layout
    graph = graph_for(layout, layout.aisle_widths, instance.params.cell_size)
    orders = sample_orders(instance.history, 96)
    rates, _ = rate_vector(instance, graph, instance.assignment, orders, 8)
    design = LayoutDesign(floor_depth=layout.floor_depth,
                          rack_depth=layout.rack_rows[0].depth)
    result = optimize_layout(design, rates, instance.params.clearance_coeff, a_lb)
    widths = [float(w) for w in result.aisle_widths]
    gap_total = layout.floor_depth - sum(r.depth for r in layout.rack_rows)
    back = gap_total - sum(widths[:-1])
    if back < a_lb - 1e-9:
        raise InfeasibleError("optimized widths do not leave a walkable back gap")
    widths[-1] = back
    return layout_with_widths(layout, widths)


def _apply_slotting_policy(instance: Instance, layout, graph, bundle: PolicyBundle,
                           seed: int):
    if bundle.slotting == "random":
        return instance.assignment
    k = max(2, len(layout.rack_rows))
    features = build_product_features(instance.catalog, instance.history)
    clustering = kmeans_cluster(features, min(k, len(instance.catalog)), seed=seed)
    return assign_slots(clustering, layout, graph, instance.history)


def _build_trip_slotlists(instance: Instance, layout, assignment: SlotAssignment,
                          bundle: PolicyBundle, seed: int):
    """Trips as (order_ids, slot visit list in encounter order)."""
    orders = sorted(instance.history, key=lambda o: (o.timestamp, o.id))
    if bundle.batching == "one-order-per-trip":
        return [([o.id], [assignment.slot_of(pid) for pid, _ in o.lines])
                for o in orders]
    k = max(2, len(layout.rack_rows))
    features = build_product_features(instance.catalog, instance.history)
    clustering = kmeans_cluster(features, min(k, len(instance.catalog)), seed=seed)
    window = orders[-min(200, len(orders)):]
    labels = bootstrap_labels(window, clustering)
    model = None
    if len(set(labels)) >= 2:
        samples = [(featurize_order(o, clustering, assignment), y)
                   for o, y in zip(window, labels)]
        model = svm_train(samples, C=1.0, epochs=40, seed=seed)
    batches, _ = build_picklists(orders, model, clustering, assignment, None,
                                 instance.params, layout, batch_cap=5)
    by_id = {o.id: o for o in orders}
    trips = []
    for batch in batches:
        slots = []
        for oid in batch.order_ids:
            slots.extend(assignment.slot_of(pid) for pid, _ in by_id[oid].lines)
        trips.append((list(batch.order_ids), slots))
    return trips


def simulate_day(instance: Instance, bundle: PolicyBundle, seed: int = 0,
                 a_lb: float = 1.0) -> ThroughputReport:
    """Simulate one shift under the policy bundle."""
    instance.validate()
    layout = _apply_layout_policy(instance, bundle, a_lb)
    graph = graph_for(instance.layout, layout.aisle_widths, instance.params.cell_size)
    P = parallelism_limit(layout, instance.params)
    if P < 1:
        raise InfeasibleError("no cart fits the narrowest aisle")

    assignment = _apply_slotting_policy(instance, layout, graph, bundle, seed)
    trips_spec = _build_trip_slotlists(instance, layout, assignment, bundle, seed)

    shift_seconds = instance.params.shift_length * 3600.0
    clocks = [0.0] * P
    timelines: Dict[int, List[dict]] = {i: [] for i in range(P)}
    busy: Dict[int, float] = {i: 0.0 for i in range(P)}
    completed = 0
    started_trips = 0
    total_meters = 0.0
    trip_id = 0

    for order_ids, slots in trips_spec:
        if not slots:
            continue
        if bundle.sequencing == "optimized":
            route = optimize_pick_sequence(graph, graph.depot_node, slots)
        else:
            route = route_in_given_order(graph, graph.depot_node, slots)
        duration = route_time_seconds(route, instance.params)
        cart = min(range(P), key=lambda i: (clocks[i], i))
        start = clocks[cart]
        if start + duration > shift_seconds:
            break   # no cart can fit this trip; dispatch is FIFO
        clocks[cart] = start + duration
        busy[cart] += duration
        timelines[cart].append(Trip(
            trip_id=trip_id, cart=cart, start=start, end=start + duration,
            distance=route.total_distance, picks=route.picks,
            order_ids=order_ids,
        ).to_dict())
        total_meters += route.total_distance
        completed += len(order_ids)
        started_trips += 1
        trip_id += 1

    offered = len(instance.history)
    return ThroughputReport(
        bundle=bundle.to_dict(),
        seed=seed,
        orders_offered=offered,
        orders_completed=completed,
        orders_never_started=offered - completed,
        orders_in_progress_at_cutoff=0,   # trips start only if they can finish
        total_travel_meters=total_meters,
        total_busy_seconds=sum(busy.values()),
        shift_seconds=shift_seconds,
        utilization=utilization(layout),
        parallelism_used=P,
        cart_timelines=timelines,
        cart_busy_seconds=busy,
        aisle_widths=[float(w) for w in layout.aisle_widths],
    )


@dataclass
class PolicyComparison:
    baseline: ThroughputReport
    optimized: ThroughputReport
    improvement: Optional[float]
    distance_ratio: Optional[float]

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline.to_dict(),
            "optimized": self.optimized.to_dict(),
            "improvement": self.improvement,
            "distance_ratio": self.distance_ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def compare_policies(instance: Instance, baseline: PolicyBundle,
                     optimized: PolicyBundle, seed: int = 0) -> PolicyComparison:
    """Run both bundles on the same instance and seed; attach full reports."""
    base = simulate_day(instance, baseline, seed=seed)
    opti = simulate_day(instance, optimized, seed=seed)
    improvement = None
    if base.orders_completed > 0:
        improvement = opti.orders_completed / base.orders_completed - 1.0
    distance_ratio = None
    if base.total_travel_meters > 0:
        distance_ratio = opti.total_travel_meters / base.total_travel_meters
    return PolicyComparison(baseline=base, optimized=opti,
                            improvement=improvement, distance_ratio=distance_ratio)
