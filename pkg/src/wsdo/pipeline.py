"""The coupled warehouse optimization pipeline.

Five subsystems form the coordination graph:

* ``wh-layout`` (continuous): aisle widths plus pick-rate targets, solved by
  SQP under the flow-clearance constraint and fixed total gap depth.
* ``wh-routing`` (evaluator): rebuilds the route graph for the incoming
  aisle widths, routes a stable sample of the order history on the current
  product placement, and responds with per-aisle pick rates.
* ``wh-slotting`` (evaluator): clusters products over the coordinated order
  window and proposes a frequency-ranked slot assignment.
* ``wh-reassign`` (evaluator, no coupling links): gates the proposal against
  the move budget relative to the instance's original placement.
* ``wh-classify`` (evaluator): trains the order categorizer on its sliding
  window, builds batched pick lists, and echoes the couplings it consumed.

Coupling links (target side listed first):

* ``delta-clearance``   layout <- routing   per-aisle pick rates
* ``aisle-widths``      routing <- layout   committed widths (echo)
* ``delta-parallelism`` classify <- routing pick rates for the cart limit
* ``assignment-metric`` classify <- slotting frequency-weighted depot distance
* ``order-window``      slotting <- classify history window bounds

The reassignment gate sits outside the link set: when its subsystem is
active the committed assignment is the gated proposal, otherwise proposals
commit directly (the cost constraint is simply absent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .core.model import Instance, Layout, SlotAssignment, layout_from_aisle_widths
from .core.routegraph import RouteGraph, build_route_graph
from .core.serialize import instance_from_dict, instance_to_dict
from .errors import ConfigurationError, ValidationError
from .layout_opt import relaxed_utilization, utilization_gradient
from .nhatc import (
    ActiveSet,
    ContinuousNodeImpl,
    EvaluatorNodeImpl,
    LinkSpec,
    NhatcReport,
    SubproblemNode,
    configure_active_set,
    nhatc_solve,
    register_node_kind,
)
from .order_class import bootstrap_labels, build_picklists, featurize_order, svm_train
from .routing import PickingFrequency, optimize_pick_sequence, picking_frequency
from .slotting import (
    assign_slots,
    build_product_features,
    evaluate_reassignment,
    kmeans_cluster,
    weighted_mean_depot_distance,
)
from .slotting import Clustering

SUBSYSTEMS = ("layout", "routing", "slotting", "reassignment", "classification")
NODE_OF = {
    "layout": "wh-layout",
    "routing": "wh-routing",
    "slotting": "wh-slotting",
    "reassignment": "wh-reassign",
    "classification": "wh-classify",
}

RATE_SCALE = 100.0      # picks/hour
METRIC_SCALE = 10.0     # meters


@dataclass
class PipelineConfig:
    active: Set[str] = field(default_factory=lambda: {"layout", "routing", "slotting",
                                                      "classification"})
    tol_c: float = 1e-2
    max_outer: int = 20
    inner_cap: int = 8
    relaxation: float = 0.5
    a_lb: float = 1.0
    k_clusters: Optional[int] = None      # default: one per rack row
    window_size: int = 200
    route_sample: int = 96
    n_exact: int = 8
    batch_cap: int = 5
    move_cost: float = 1.0
    budget: float = math.inf
    svm_c: float = 1.0
    svm_epochs: int = 40
    seed: int = 0

    def validate(self) -> None:
        unknown = set(self.active) - set(SUBSYSTEMS)
        if unknown:
            raise ConfigurationError(
                f"unknown subsystems {sorted(unknown)}; valid: {SUBSYSTEMS}"
            )
        if self.tol_c <= 0 or self.max_outer < 1:
            raise ConfigurationError("tolerances must be positive")


# ------------------------------------------------------------ shared tools --

_GRAPH_CACHE: Dict[Tuple, RouteGraph] = {}


def _quantize_widths(widths: Sequence[float]) -> Tuple[float, ...]:
    return tuple(round(float(w), 2) for w in widths)


def layout_with_widths(base: Layout, widths: Sequence[float]) -> Layout:
    """Same racks, new gap widths; the back gap absorbs rounding."""
    row_specs = [(r.depth, r.length, r.slot_count) for r in base.rack_rows]
    return layout_from_aisle_widths(
        base.floor_width, base.floor_depth, row_specs,
        list(widths[:-1]) + [max(widths[-1], 1e-9)],
        depot=base.depot,
    )


def graph_for(base: Layout, widths: Sequence[float], cell_size: float) -> RouteGraph:
    key = (id(base), tuple(round(float(w), 9) for w in widths), cell_size)
    graph = _GRAPH_CACHE.get(key)
    if graph is None:
        graph = build_route_graph(layout_with_widths(base, widths), cell_size)
        if len(_GRAPH_CACHE) > 64:
            _GRAPH_CACHE.clear()
        _GRAPH_CACHE[key] = graph
    return graph


def sample_orders(history, limit: int):
    """Stable stride sample of the history (deterministic, seed-free)."""
    if limit <= 0 or len(history) <= limit:
        return list(history)
    stride = math.ceil(len(history) / limit)
    return list(history[::stride])[:limit]


def window_orders(history, bounds: Sequence[float]):
    lo, hi = float(bounds[0]), float(bounds[1])
    inside = [o for o in history if lo <= o.timestamp <= hi]
    return inside if inside else list(history)


def last_window_bounds(history, size: int) -> List[float]:
    recent = sorted(history, key=lambda o: (o.timestamp, o.id))[-size:]
    return [recent[0].timestamp, recent[-1].timestamp]


def routes_for_assignment(instance: Instance, graph: RouteGraph,
                          assignment: SlotAssignment, orders, n_exact: int):
    routes = []
    for order in orders:
        slots = [assignment.slot_of(pid) for pid, _ in order.lines]
        routes.append(optimize_pick_sequence(graph, graph.depot_node, slots,
                                             n_exact=n_exact))
    return routes


def rate_vector(instance: Instance, graph: RouteGraph, assignment: SlotAssignment,
                orders, n_exact: int) -> Tuple[List[float], float]:
    routes = routes_for_assignment(instance, graph, assignment, orders, n_exact)
    freq = picking_frequency(routes, instance.params)
    total = 0.0
    for route in routes:
        total += route.total_distance
    return freq.as_vector(graph.num_aisles), total


# -------------------------------------------------------------- node kinds --

def _layout_factory(params: dict):
    instance = instance_from_dict(params["instance"])
    layout = instance.layout
    n_rows = len(layout.rack_rows)
    m = n_rows + 1
    D = layout.floor_depth
    depths = sum(r.depth for r in layout.rack_rows)
    gap_total = D - depths
    d_r = layout.rack_rows[0].depth if n_rows else 1.0
    a_lb = float(params["a_lb"])
    k = instance.params.clearance_coeff
    internal = list(range(1, m - 1)) if m > 2 else list(range(m))
    x0 = list(layout.aisle_widths) + list(params.get("rates0", [0.0] * m))

    def objective(x):
        a_mean = float(np.mean(x[internal]))
        return -relaxed_utilization(a_mean, D, d_r)

    def gradient(x):
        grad = np.zeros(2 * m)
        sub = utilization_gradient(np.asarray(x[internal]), D, d_r)
        grad[internal] = -sub
        return grad

    def ineq(x):
        return k * x[m:2 * m] - x[:m]

    def ineq_jac(x):
        J = np.zeros((m, 2 * m))
        J[:, :m] = -np.eye(m)
        J[:, m:] = k * np.eye(m)
        return J

    def eq(x):
        return np.array([float(np.sum(x[:m])) - gap_total])

    def eq_jac(x):
        J = np.zeros((1, 2 * m))
        J[0, :m] = 1.0
        return J

    lb = np.concatenate([np.full(m, a_lb), np.zeros(m)])
    ub = np.concatenate([np.full(m, gap_total), np.full(m, 1e6)])
    return ContinuousNodeImpl(
        dim=2 * m, objective=objective, gradient=gradient,
        ineq=ineq, ineq_jac=ineq_jac, eq=eq, eq_jac=eq_jac,
        lb=lb, ub=ub, x0=x0,
        t_idx={"delta-clearance": list(range(m, 2 * m))},
        r_idx={"aisle-widths": list(range(m))},
        sqp_tol=1e-9,
    )


def _routing_factory(params: dict):
    instance = instance_from_dict(params["instance"])
    route_sample = int(params.get("route_sample", 96))
    n_exact = int(params.get("n_exact", 8))
    orders = sample_orders(instance.history, route_sample)
    cache: Dict[Tuple, Tuple[List[float], float]] = {}

    def fn(incoming, context, seed):
        widths = [float(w) for w in incoming["aisle-widths"]]
        assignment = SlotAssignment(dict(context["assignment"]))
        # geometry quantized to 1 cm: well inside the cell-size discretization
        # error, and sub-cm width moves stop forcing graph rebuilds
        quantized = _quantize_widths(widths)
        key = (quantized, tuple(sorted(assignment.mapping.items())))
        if key not in cache:
            graph = graph_for(instance.layout, quantized, instance.params.cell_size)
            if len(cache) > 64:
                cache.clear()
            cache[key] = rate_vector(instance, graph, assignment, orders, n_exact)
        rates, total_distance = cache[key]
        values = {
            "delta-clearance": rates,
            "delta-parallelism": rates,
            "aisle-widths": widths,
        }
        return values, total_distance, {"total_distance": total_distance,
                                        "orders_routed": len(orders)}

    return EvaluatorNodeImpl(fn, link_sides_map={
        "delta-clearance": "r", "delta-parallelism": "r", "aisle-widths": "t",
    })


def _slotting_factory(params: dict):
    instance = instance_from_dict(params["instance"])
    k_clusters = int(params["k_clusters"])
    seed = int(params.get("seed", 0))

    def fn(incoming, context, _seed):
        bounds = incoming["order-window"]
        widths = _quantize_widths(context["aisle_widths"])
        orders = window_orders(instance.history, bounds)
        features = build_product_features(instance.catalog, orders)
        clustering = kmeans_cluster(features, k_clusters, seed=seed)
        layout = layout_with_widths(instance.layout, widths)
        graph = graph_for(instance.layout, widths, instance.params.cell_size)
        proposal = assign_slots(clustering, layout, graph, orders)
        metric = weighted_mean_depot_distance(proposal, graph, orders)
        values = {
            "assignment-metric": [metric],
            "order-window": list(map(float, bounds)),
        }
        payload = {
            "proposal": dict(sorted(proposal.mapping.items())),
            "clustering": clustering.to_dict(),
            "metric": metric,
        }
        return values, metric, payload

    return EvaluatorNodeImpl(fn, link_sides_map={
        "assignment-metric": "r", "order-window": "t",
    })


def _reassign_factory(params: dict):
    instance = instance_from_dict(params["instance"])
    move_cost = float(params.get("move_cost", 1.0))
    budget = float(params.get("budget", math.inf))

    def fn(incoming, context, seed):
        widths = _quantize_widths(context["aisle_widths"])
        current = SlotAssignment(dict(context["current"]))
        proposal = SlotAssignment(dict(context["proposal"]))
        graph = graph_for(instance.layout, widths, instance.params.cell_size)
        plan = evaluate_reassignment(current, proposal, instance.history, graph,
                                     move_cost=move_cost, budget=budget)
        effective = plan.apply(current)
        payload = {
            "effective": dict(sorted(effective.mapping.items())),
            "plan": plan.to_dict(),
        }
        return {}, plan.total_benefit, payload

    return EvaluatorNodeImpl(fn, link_sides_map={})


def _classify_factory(params: dict):
    instance = instance_from_dict(params["instance"])
    window_size = int(params.get("window_size", 200))
    svm_c = float(params.get("svm_c", 1.0))
    svm_epochs = int(params.get("svm_epochs", 40))
    batch_cap = int(params.get("batch_cap", 5))
    seed = int(params.get("seed", 0))

    def fn(incoming, context, _seed):
        widths = _quantize_widths(context["aisle_widths"])
        assignment = SlotAssignment(dict(context["assignment"]))
        clustering = Clustering.from_dict(context["clustering"])
        rates_in = [float(v) for v in incoming["delta-parallelism"]]
        bounds = last_window_bounds(instance.history, window_size)
        orders = window_orders(instance.history, bounds)

        labels = bootstrap_labels(orders, clustering)
        model = None
        accuracy = 1.0
        if len(set(labels)) >= 2:
            samples = [(featurize_order(o, clustering, assignment), y)
                       for o, y in zip(orders, labels)]
            model = svm_train(samples, C=svm_c, epochs=svm_epochs, seed=seed)
            accuracy = model.accuracy(samples)

        layout = layout_with_widths(instance.layout, widths)
        graph = graph_for(instance.layout, widths, instance.params.cell_size)
        rates = PickingFrequency(
            rates={i: v for i, v in enumerate(rates_in)}, total_hours=1.0
        )
        batches, dispatch = build_picklists(
            orders, model, clustering, assignment, rates, instance.params,
            layout, batch_cap=batch_cap,
        )
        metric = weighted_mean_depot_distance(assignment, graph, orders)
        values = {
            "order-window": list(map(float, bounds)),
            "assignment-metric": [metric],
            "delta-parallelism": rates_in,
        }
        payload = {
            "model": model.to_json() if model else None,
            "training_accuracy": accuracy,
            "parallelism": min(instance.params.max_carts,
                               min(int(w // instance.params.cart_width) for w in widths)),
            "num_batches": len(batches),
            "dispatch": dispatch,
        }
        objective = 1.0 - accuracy
        return values, objective, payload

    return EvaluatorNodeImpl(fn, link_sides_map={
        "order-window": "r", "assignment-metric": "t", "delta-parallelism": "t",
    })


register_node_kind("wh-layout", _layout_factory)
register_node_kind("wh-routing", _routing_factory)
register_node_kind("wh-slotting", _slotting_factory)
register_node_kind("wh-reassign", _reassign_factory)
register_node_kind("wh-classify", _classify_factory)


# --------------------------------------------------------------- pipeline --

@dataclass
class PipelineState:
    aisle_widths: List[float]
    proposal: Dict[str, str]
    effective: Dict[str, str]
    clustering: dict
    rates: List[float]
    model_json: Optional[str] = None
    parallelism: int = 0
    plan: Optional[dict] = None
    num_batches: int = 0


@dataclass
class OptimizationOutcome:
    report: NhatcReport
    instance: Instance
    state: PipelineState
    improvement_hint: dict

    def to_dict(self) -> dict:
        doc = self.report.to_dict()
        doc["numerics"]["final_aisle_widths"] = list(self.state.aisle_widths)
        doc["numerics"]["final_assignment"] = dict(sorted(self.state.effective.items()))
        doc["numerics"]["clustering"] = self.state.clustering
        doc["numerics"]["parallelism"] = self.state.parallelism
        doc["numerics"]["rates"] = list(self.state.rates)
        doc["numerics"]["num_batches"] = self.state.num_batches
        if self.state.plan is not None:
            doc["numerics"]["reassignment_plan"] = self.state.plan
        doc["numerics"]["improvement_hint"] = self.improvement_hint
        return doc


def bootstrap_state(instance: Instance, config: PipelineConfig) -> Tuple[PipelineState, dict]:
    """Evaluate the unmodified instance once to seed links and frozen values."""
    widths = list(instance.layout.aisle_widths)
    graph = graph_for(instance.layout, widths, instance.params.cell_size)
    orders = sample_orders(instance.history, config.route_sample)
    rates, _ = rate_vector(instance, graph, instance.assignment, orders, config.n_exact)
    k_clusters = config.k_clusters or max(2, len(instance.layout.rack_rows))
    features = build_product_features(instance.catalog, instance.history)
    clustering = kmeans_cluster(features, min(k_clusters, len(instance.catalog)),
                                seed=config.seed)
    bounds = last_window_bounds(instance.history, config.window_size)
    metric = weighted_mean_depot_distance(
        instance.assignment, graph, window_orders(instance.history, bounds)
    )
    state = PipelineState(
        aisle_widths=widths,
        proposal=dict(instance.assignment.mapping),
        effective=dict(instance.assignment.mapping),
        clustering=clustering.to_dict(),
        rates=rates,
    )
    seeds = {
        "rates": rates,
        "widths": widths,
        "metric": metric,
        "bounds": bounds,
    }
    return state, seeds


def build_pipeline(instance: Instance, config: PipelineConfig):
    config.validate()
    if not instance.layout.rack_rows:
        raise ValidationError("the pipeline needs at least one rack row")
    instance_doc = instance_to_dict(instance)
    state, seeds = bootstrap_state(instance, config)
    m = len(instance.layout.rack_rows) + 1
    span = max(1.0, instance.history[-1].timestamp - instance.history[0].timestamp)

    nodes = [
        SubproblemNode("wh-layout", kind="wh-layout", params={
            "instance": instance_doc, "a_lb": config.a_lb, "rates0": seeds["rates"],
        }),
        SubproblemNode("wh-routing", kind="wh-routing", params={
            "instance": instance_doc, "route_sample": config.route_sample,
            "n_exact": config.n_exact,
        }),
        SubproblemNode("wh-slotting", kind="wh-slotting", params={
            "instance": instance_doc,
            "k_clusters": config.k_clusters or max(2, len(instance.layout.rack_rows)),
            "seed": config.seed,
        }),
        SubproblemNode("wh-reassign", kind="wh-reassign", params={
            "instance": instance_doc, "move_cost": config.move_cost,
            "budget": config.budget if math.isfinite(config.budget) else 1e18,
        }),
        SubproblemNode("wh-classify", kind="wh-classify", params={
            "instance": instance_doc, "window_size": config.window_size,
            "svm_c": config.svm_c, "svm_epochs": config.svm_epochs,
            "batch_cap": config.batch_cap, "seed": config.seed,
        }),
    ]
    links = [
        LinkSpec("delta-clearance", target_node="wh-layout",
                 response_node="wh-routing", dim=m, scale=RATE_SCALE,
                 t0=seeds["rates"], r0=seeds["rates"]),
        LinkSpec("aisle-widths", target_node="wh-routing",
                 response_node="wh-layout", dim=m, scale=1.0,
                 t0=seeds["widths"], r0=seeds["widths"]),
        LinkSpec("delta-parallelism", target_node="wh-classify",
                 response_node="wh-routing", dim=m, scale=RATE_SCALE,
                 t0=seeds["rates"], r0=seeds["rates"]),
        LinkSpec("assignment-metric", target_node="wh-classify",
                 response_node="wh-slotting", dim=1, scale=METRIC_SCALE,
                 t0=[seeds["metric"]], r0=[seeds["metric"]]),
        LinkSpec("order-window", target_node="wh-slotting",
                 response_node="wh-classify", dim=2, scale=span,
                 t0=seeds["bounds"], r0=seeds["bounds"]),
    ]

    active_nodes = sorted(NODE_OF[s] for s in config.active)
    frozen: Dict[str, Dict[str, List[float]]] = {}
    for spec in links:
        for side, owner in (("t", spec.target_node), ("r", spec.response_node)):
            other = spec.response_node if side == "t" else spec.target_node
            if owner not in active_nodes and other in active_nodes:
                value = {"delta-clearance": seeds["rates"],
                         "aisle-widths": seeds["widths"],
                         "delta-parallelism": seeds["rates"],
                         "assignment-metric": [seeds["metric"]],
                         "order-window": seeds["bounds"]}[spec.link_id]
                frozen.setdefault(spec.link_id, {})[side] = list(map(float, value))
    active = configure_active_set(nodes, links, active_nodes, frozen)

    reassign_active = "reassignment" in config.active
    slotting_active = "slotting" in config.active
    layout_active = "layout" in config.active
    original = dict(instance.assignment.mapping)

    def context_fn(node_id: str) -> dict:
        if node_id == "wh-routing":
            return {"assignment": state.effective}
        if node_id == "wh-slotting":
            return {"aisle_widths": state.aisle_widths}
        if node_id == "wh-reassign":
            return {"aisle_widths": state.aisle_widths,
                    "current": original,
                    "proposal": state.proposal}
        if node_id == "wh-classify":
            return {"aisle_widths": state.aisle_widths,
                    "assignment": state.effective,
                    "clustering": state.clustering}
        return {}

    def on_sweep(results) -> None:
        gated = None
        for res in results:
            if res.status in ("infeasible", "error"):
                continue
            if res.node_id == "wh-layout" and res.x is not None:
                state.aisle_widths = [float(v) for v in res.x[:m]]
            elif res.node_id == "wh-routing":
                state.rates = [float(v) for v in res.values["delta-clearance"]]
            elif res.node_id == "wh-slotting":
                state.proposal = dict(res.payload["proposal"])
                state.clustering = res.payload["clustering"]
            elif res.node_id == "wh-reassign":
                gated = dict(res.payload["effective"])
                state.plan = res.payload["plan"]
            elif res.node_id == "wh-classify":
                state.model_json = res.payload.get("model")
                state.parallelism = int(res.payload.get("parallelism", 0))
                state.num_batches = int(res.payload.get("num_batches", 0))
        if not slotting_active:
            state.proposal = dict(original)
        if reassign_active:
            if gated is not None:
                state.effective = gated
        else:
            state.effective = dict(state.proposal)
        if not layout_active:
            state.aisle_widths = list(instance.layout.aisle_widths)

    return nodes, links, active, state, context_fn, on_sweep


def optimize_warehouse(instance: Instance, config: Optional[PipelineConfig] = None,
                       dispatcher=None) -> OptimizationOutcome:
    """Run the coordinated optimization and return the updated instance."""
    config = config or PipelineConfig()
    nodes, links, active, state, context_fn, on_sweep = build_pipeline(instance, config)
    report = nhatc_solve(
        nodes, links,
        tol_c=config.tol_c, max_outer=config.max_outer,
        active=active, dispatcher=dispatcher,
        context_fn=context_fn, on_sweep=on_sweep,
        relaxation=config.relaxation, inner_cap=config.inner_cap,
        seed=config.seed,
    )
    new_layout = layout_with_widths(instance.layout, state.aisle_widths)
    optimized = instance.with_layout(new_layout).with_assignment(
        SlotAssignment(dict(state.effective))
    )
    optimized.validate()
    improvement_hint = {
        "initial_widths": list(instance.layout.aisle_widths),
        "final_widths": list(state.aisle_widths),
        "moved_products": sum(
            1 for pid, slot in state.effective.items()
            if instance.assignment.mapping.get(pid) != slot
        ),
    }
    return OptimizationOutcome(report=report, instance=optimized, state=state,
                               improvement_hint=improvement_hint)
