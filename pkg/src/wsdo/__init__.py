"""Warehouse system-design optimization toolkit.

Coupled layout, routing, slotting, reassignment and order-classification
subsystems coordinated by nonhierarchical target cascading, with optional
TCP worker execution and a shift-throughput simulator.
"""

from .core import (
    GenParams,
    Instance,
    Layout,
    LayoutTemplate,
    Order,
    Product,
    RackRow,
    RouteGraph,
    SimParams,
    SlotAssignment,
    build_route_graph,
    default_benchmark_instance,
    generate_instance,
    load_instance,
    save_instance,
    utilization,
)
from .routing import (
    PickingFrequency,
    Route,
    optimize_pick_sequence,
    picking_frequency,
    route_in_given_order,
    shortest_path,
)
from .sqp import NlpProblem, NlpResult, sqp_solve
from .layout_opt import LayoutDesign, LayoutOptResult, optimize_layout
from .slotting import (
    Clustering,
    ProductFeatures,
    ReassignmentPlan,
    assign_slots,
    build_product_features,
    evaluate_reassignment,
    kmeans_cluster,
)
from .order_class import (
    OrderFeatures,
    PickBatch,
    SvmModel,
    TrainingSample,
    build_picklists,
    featurize_order,
    svm_train,
    svm_update,
)
from .nhatc import (
    ActiveSet,
    CouplingTerm,
    LinkSpec,
    NhatcReport,
    SubproblemNode,
    augment_objective,
    configure_active_set,
    nhatc_solve,
    solve_node,
)
from .pipeline import OptimizationOutcome, PipelineConfig, optimize_warehouse
from .simulate import (
    PolicyBundle,
    PolicyComparison,
    ThroughputReport,
    baseline_bundle,
    compare_policies,
    optimized_bundle,
    simulate_day,
)

__version__ = "0.1.0"
