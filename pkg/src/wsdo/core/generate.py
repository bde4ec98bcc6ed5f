"""Seeded synthetic instance generation.

Product demand follows a Zipf law over popularity ranks; order line counts
are a shifted Poisson (minimum one line).  Everything is drawn from a single
``numpy`` generator, so a fixed seed reproduces the instance byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import CapacityError, ValidationError
from .model import Instance, Order, Product, SimParams, SlotAssignment, layout_from_aisle_widths

EPOCH_BASE = 1_600_000_000.0  # fixed timestamp origin for generated histories
HISTORY_SPAN_DAYS = 7.0


@dataclass(frozen=True)
class LayoutTemplate:
    floor_width: float = 30.0
    floor_depth: float = 30.0
    num_rows: int = 4
    rack_depth: float = 1.5
    rack_length: float = 20.0
    slots_per_row: int = 75
    aisle_width: float = 3.0   # uniform initial width for every gap


@dataclass(frozen=True)
class GenParams:
    num_products: int = 200
    num_orders: int = 400
    zipf_exponent: float = 1.1
    mean_lines_per_order: float = 4.0
    template: LayoutTemplate = field(default_factory=LayoutTemplate)
    sim: SimParams = field(default_factory=lambda: SimParams(
        picker_speed=1.5,
        handle_time=5.0,
        cart_width=0.8,
        shift_length=2.0,
        clearance_coeff=0.01,
        cell_size=0.5,
        max_carts=3,
    ))


def zipf_weights(num_products: int, exponent: float) -> np.ndarray:
    """Normalized Zipf pick probabilities over ranks 1..n."""
    ranks = np.arange(1, num_products + 1, dtype=float)
    w = ranks ** (-exponent)
    return w / w.sum()


def build_template_layout(template: LayoutTemplate):
    t = template
    row_specs = [(t.rack_depth, t.rack_length, t.slots_per_row)] * t.num_rows
    needed = t.num_rows * t.rack_depth + (t.num_rows + 1) * t.aisle_width
    if needed > t.floor_depth + 1e-9:
        raise ValidationError(
            f"template does not fit: {t.num_rows} rows need {needed} m of depth, "
            f"floor has {t.floor_depth} m"
        )
    return layout_from_aisle_widths(
        floor_width=t.floor_width,
        floor_depth=t.floor_depth,
        row_specs=row_specs,
        aisle_widths=[t.aisle_width] * (t.num_rows + 1),
    )


def generate_instance(seed: int, gen_params: GenParams | None = None) -> Instance:
    """Deterministically generate a full instance from a seed."""
    gp = gen_params or GenParams()
    if gp.num_products < 1 or gp.num_orders < 1:
        raise ValidationError("num_products and num_orders must be >= 1")
    if gp.zipf_exponent <= 0:
        raise ValidationError("zipf_exponent must be > 0")
    if gp.mean_lines_per_order < 1:
        raise ValidationError("mean_lines_per_order must be >= 1")

    layout = build_template_layout(gp.template)
    slots = layout.slot_ids()
    if gp.num_products > len(slots):
        raise CapacityError(
            f"{gp.num_products} products do not fit in {len(slots)} slots"
        )

    rng = np.random.default_rng(seed)
    width = len(str(gp.num_products))
    catalog = tuple(
        Product(id=f"P{r:0{width}d}", popularity_rank=r) for r in range(1, gp.num_products + 1)
    )
    weights = zipf_weights(gp.num_products, gp.zipf_exponent)

    order_gap = HISTORY_SPAN_DAYS * 86400.0 / gp.num_orders
    orders = []
    owidth = len(str(gp.num_orders))
    for i in range(gp.num_orders):
        n_lines = 1 + int(rng.poisson(gp.mean_lines_per_order - 1.0))
        n_lines = min(n_lines, gp.num_products)
        chosen = rng.choice(gp.num_products, size=n_lines, replace=False, p=weights)
        lines = tuple(
            (catalog[j].id, int(rng.integers(1, 4))) for j in sorted(int(c) for c in chosen)
        )
        orders.append(Order(id=f"O{i:0{owidth}d}", timestamp=EPOCH_BASE + i * order_gap, lines=lines))

    perm = rng.permutation(len(slots))
    assignment = SlotAssignment({
        p.id: slots[int(perm[i])] for i, p in enumerate(catalog)
    })

    instance = Instance(
        layout=layout,
        catalog=catalog,
        assignment=assignment,
        history=tuple(orders),
        params=gp.sim,
    )
    instance.validate()
    return instance


def default_benchmark_params() -> GenParams:
    """The shipped desk-scale benchmark (200 products, 400 orders, 4 rows)."""
    return GenParams()


def default_benchmark_instance(seed: int = 42) -> Instance:
    return generate_instance(seed, default_benchmark_params())
