from .model import (
    GEOM_TOL,
    Instance,
    Layout,
    Order,
    Product,
    RackRow,
    SimParams,
    SlotAssignment,
    layout_from_aisle_widths,
    utilization,
)
from .generate import (
    GenParams,
    LayoutTemplate,
    build_template_layout,
    default_benchmark_instance,
    default_benchmark_params,
    generate_instance,
    zipf_weights,
)
from .routegraph import Node, RouteGraph, build_route_graph
from .serialize import (
    dumps_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    loads_instance,
    save_instance,
)

__all__ = [
    "GEOM_TOL",
    "GenParams",
    "Instance",
    "Layout",
    "LayoutTemplate",
    "Node",
    "Order",
    "Product",
    "RackRow",
    "RouteGraph",
    "SimParams",
    "SlotAssignment",
    "build_route_graph",
    "build_template_layout",
    "default_benchmark_instance",
    "default_benchmark_params",
    "dumps_instance",
    "generate_instance",
    "instance_from_dict",
    "instance_to_dict",
    "layout_from_aisle_widths",
    "load_instance",
    "loads_instance",
    "save_instance",
    "utilization",
    "zipf_weights",
]
