"""Command-line interface.

Subcommands: ``gen`` (write a synthetic instance), ``optimize`` (run the
coordinated pipeline), ``evaluate`` (simulate one policy bundle),
``compare`` (baseline vs optimized bundles), ``worker`` (serve solves over
TCP until SHUTDOWN) and ``plot`` (render layout + route as SVG).

Exit codes: 0 success, 1 usage error, 2 infeasible or not converged (the
report is still written), 3 I/O or protocol failure.  Volatile run metadata
(wall time, worker placements) goes to a separate ``*.meta.json`` so the
primary outputs are byte-stable for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import pipeline as pipeline_mod
from .core.generate import GenParams, LayoutTemplate, generate_instance
from .core.model import SimParams
from .core.routegraph import build_route_graph
from .core.serialize import load_instance, save_instance
from .distributed.dispatch import RemoteDispatcher, load_worker_config
from .distributed.worker import worker_serve
from .errors import (
    CapacityError,
    ConfigurationError,
    FramingError,
    InfeasibleError,
    ProtocolError,
    ValidationError,
    WsdoError,
)
from .pipeline import PipelineConfig, SUBSYSTEMS, optimize_warehouse
from .plot import instance_svg
from .routing import Route, optimize_pick_sequence, route_in_given_order
from .simulate import (
    PolicyBundle,
    baseline_bundle,
    compare_policies,
    optimized_bundle,
    reports_to_csv,
    simulate_day,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3

WORKERS_ENV = "WSDO_WORKERS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _json_text(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _load_run_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    return doc


def _resolve_workers(args, config: dict):
    path = getattr(args, "workers", None) or config.get("workers") \
        or os.environ.get(WORKERS_ENV)
    if not path:
        return None
    endpoints = load_worker_config(path)
    return RemoteDispatcher(endpoints)


def _parse_bundle(spec: str | None, default: PolicyBundle) -> PolicyBundle:
    if not spec:
        return default
    fields = default.to_dict()
    for part in spec.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise _UsageError(f"bundle entry {part!r} is not key=value")
        key, value = part.split("=", 1)
        key = key.strip()
        if key not in fields:
            raise _UsageError(f"unknown bundle dimension {key!r}")
        fields[key] = value.strip()
    return PolicyBundle(**fields)


# ------------------------------------------------------------ subcommands --

def cmd_gen(args) -> int:
    template = LayoutTemplate(
        floor_width=args.floor_width,
        floor_depth=args.floor_depth,
        num_rows=args.rows,
        rack_depth=args.rack_depth,
        rack_length=args.row_length,
        slots_per_row=args.slots_per_row,
        aisle_width=args.aisle_width,
    )
    sim = SimParams(
        picker_speed=args.picker_speed,
        handle_time=args.handle_time,
        cart_width=args.cart_width,
        shift_length=args.shift_hours,
        clearance_coeff=args.clearance_coeff,
        cell_size=args.cell_size,
        max_carts=args.max_carts,
    )
    params = GenParams(
        num_products=args.products,
        num_orders=args.orders,
        zipf_exponent=args.zipf,
        mean_lines_per_order=args.mean_lines,
        template=template,
        sim=sim,
    )
    instance = generate_instance(args.seed, params)
    save_instance(instance, args.out)
    print(f"wrote {args.out} ({len(instance.catalog)} products, "
          f"{len(instance.history)} orders, {instance.layout.slot_count()} slots)")
    return EXIT_OK


def cmd_optimize(args) -> int:
    config_doc = _load_run_config(args.config)
    instance = load_instance(args.instance or config_doc.get("instance"))
    active = args.active or config_doc.get("active")
    if isinstance(active, str):
        active = [s.strip() for s in active.split(",") if s.strip()]
    config = PipelineConfig(
        active=set(active) if active else PipelineConfig().active,
        tol_c=args.tol if args.tol is not None else config_doc.get("tol_c", 1e-2),
        max_outer=args.max_outer if args.max_outer is not None
        else config_doc.get("max_outer", 20),
        budget=args.budget if args.budget is not None else math.inf,
        move_cost=args.move_cost,
        seed=args.seed,
    )
    dispatcher = _resolve_workers(args, config_doc)
    try:
        outcome = optimize_warehouse(instance, config, dispatcher=dispatcher)
    finally:
        if dispatcher is not None:
            dispatcher.close()
    out_dir = Path(args.out)
    doc = outcome.to_dict()
    _write_text(out_dir / "report.json", _json_text(doc["numerics"]))
    _write_text(out_dir / "report.meta.json", _json_text(doc["meta"]))
    save_instance(outcome.instance, out_dir / "optimized_instance.json")
    report = outcome.report
    print(f"converged={report.converged} iterations={report.iterations} "
          f"final |c|_inf={report.c_inf_history[-1]:.3e}")
    print(f"wrote {out_dir / 'report.json'} and {out_dir / 'optimized_instance.json'}")
    return EXIT_OK if report.converged else EXIT_INFEASIBLE


def cmd_evaluate(args) -> int:
    instance = load_instance(args.instance)
    bundle = _parse_bundle(args.bundle, baseline_bundle())
    report = simulate_day(instance, bundle, seed=args.seed)
    out_dir = Path(args.out)
    _write_text(out_dir / "evaluation.json", report.to_json())
    _write_text(out_dir / "summary.csv", reports_to_csv([report]))
    print(f"completed {report.orders_completed}/{report.orders_offered} orders, "
          f"{report.total_travel_meters:.0f} m traveled, "
          f"parallelism {report.parallelism_used}")
    print(f"wrote {out_dir / 'evaluation.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    instance = load_instance(args.instance)
    base = _parse_bundle(args.baseline, baseline_bundle())
    opti = _parse_bundle(args.optimized, optimized_bundle())
    comparison = compare_policies(instance, base, opti, seed=args.seed)
    out_dir = Path(args.out)
    _write_text(out_dir / "comparison.json", comparison.to_json())
    _write_text(out_dir / "summary.csv",
                reports_to_csv([comparison.baseline, comparison.optimized]))
    improvement = comparison.improvement
    text = "undefined (baseline completed 0 orders)" if improvement is None \
        else f"{improvement:+.1%}"
    print(f"baseline {comparison.baseline.orders_completed} vs optimized "
          f"{comparison.optimized.orders_completed} orders: improvement {text}")
    print(f"wrote {out_dir / 'comparison.json'}")
    return EXIT_OK


def cmd_worker(args) -> int:
    host, _, port = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    capabilities = None
    if args.capabilities:
        capabilities = [c.strip() for c in args.capabilities.split(",") if c.strip()]

    def announce(bound_host, bound_port):
        print(f"worker listening on {bound_host}:{bound_port}", flush=True)

    worker_serve(host=host, port=int(port), capabilities=capabilities,
                 announce=announce)
    return EXIT_OK


def cmd_plot(args) -> int:
    instance = load_instance(args.instance)
    graph = build_route_graph(instance.layout, instance.params.cell_size)
    route = None
    if args.route:
        with open(args.route, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        route = Route(
            slots=tuple(doc["slots"]),
            nodes=tuple(tuple(n) for n in doc["nodes"]),
            total_distance=float(doc["total_distance"]),
            aisle_traversal_counts={}, aisle_pick_counts={},
        )
    else:
        orders = {o.id: o for o in instance.history}
        order = orders.get(args.order) if args.order else instance.history[0]
        if order is None:
            raise ValidationError(f"order {args.order!r} not in the history")
        slots = [instance.assignment.slot_of(pid) for pid, _ in order.lines]
        if args.sequencing == "optimized":
            route = optimize_pick_sequence(graph, graph.depot_node, slots)
        else:
            route = route_in_given_order(graph, graph.depot_node, slots)
        if args.dump_route:
            _write_text(Path(args.dump_route), _json_text(route.to_dict()))
    _write_text(Path(args.out), instance_svg(instance, route=route, graph=graph))
    print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser --

def build_parser() -> _Parser:
    parser = _Parser(prog="wsdo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--products", type=int, default=200)
    p.add_argument("--orders", type=int, default=400)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--mean-lines", type=float, default=4.0)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--row-length", type=float, default=20.0)
    p.add_argument("--rack-depth", type=float, default=1.5)
    p.add_argument("--slots-per-row", type=int, default=75)
    p.add_argument("--floor-width", type=float, default=30.0)
    p.add_argument("--floor-depth", type=float, default=30.0)
    p.add_argument("--aisle-width", type=float, default=3.0)
    p.add_argument("--picker-speed", type=float, default=1.5)
    p.add_argument("--handle-time", type=float, default=5.0)
    p.add_argument("--cart-width", type=float, default=0.8)
    p.add_argument("--shift-hours", type=float, default=2.0)
    p.add_argument("--clearance-coeff", type=float, default=0.01)
    p.add_argument("--cell-size", type=float, default=0.5)
    p.add_argument("--max-carts", type=int, default=3)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("optimize", help="run the coordinated optimization")
    p.add_argument("--instance")
    p.add_argument("--config", help="JSON run config (flags override)")
    p.add_argument("--active", help=f"comma list from {{{','.join(SUBSYSTEMS)}}}")
    p.add_argument("--workers", help=f"worker registry JSON (or ${WORKERS_ENV})")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-outer", type=int, default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--move-cost", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("evaluate", help="simulate one policy bundle")
    p.add_argument("--instance", required=True)
    p.add_argument("--bundle", help="key=value list, e.g. slotting=clustered")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="baseline vs optimized policy bundles")
    p.add_argument("--instance", required=True)
    p.add_argument("--baseline", help="overrides for the baseline bundle")
    p.add_argument("--optimized", help="overrides for the optimized bundle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("worker", help="serve node solves over TCP")
    p.add_argument("--bind", default="127.0.0.1:0", help="host:port (port 0 = ephemeral)")
    p.add_argument("--capabilities", help="comma list of node kinds (default: all)")
    p.set_defaults(fn=cmd_worker)

    p = sub.add_parser("plot", help="render layout + route as SVG")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", help="order id to route (default: first order)")
    p.add_argument("--route", help="plot a previously dumped route JSON instead")
    p.add_argument("--sequencing", choices=("given-order", "optimized"),
                   default="optimized")
    p.add_argument("--dump-route", help="also write the computed route dump here")
    p.set_defaults(fn=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError,) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, CapacityError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FramingError, ProtocolError) as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, WsdoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
