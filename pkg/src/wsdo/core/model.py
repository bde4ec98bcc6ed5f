"""Domain model: layout geometry, catalog, orders and simulation parameters.

All values are immutable after construction.  ``validate()`` methods raise
:class:`~wsdo.errors.ValidationError` on the first violated invariant and are
cheap enough to call defensively.

Geometry conventions
--------------------
The floor is the rectangle ``[0, floor_width] x [0, floor_depth]`` in meters.
Rack rows run parallel to the x axis and are horizontally centered, leaving a
side corridor on each end of every row.  ``RackRow.offset`` is the y
coordinate of the row's front (depot-side) edge.  Aisle ``i`` is the gap
before row ``i``; the last aisle is the gap between the final row and the
back wall, so ``n`` rows always have ``n + 1`` aisle widths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from ..errors import ValidationError

GEOM_TOL = 1e-9


@dataclass(frozen=True)
class RackRow:
    offset: float
    depth: float
    length: float
    slot_count: int


@dataclass(frozen=True)
class Layout:
    floor_width: float
    floor_depth: float
    rack_rows: Tuple[RackRow, ...]
    aisle_widths: Tuple[float, ...]
    depot: Tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "rack_rows", tuple(self.rack_rows))
        object.__setattr__(self, "aisle_widths", tuple(float(a) for a in self.aisle_widths))
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))

    # -- geometry helpers ---------------------------------------------------

    def row_x0(self, row: RackRow) -> float:
        """x coordinate where a (centered) rack row starts."""
        return (self.floor_width - row.length) / 2.0

    def rack_rects(self) -> List[Tuple[float, float, float, float]]:
        """Rack footprints as ``(x0, y0, x1, y1)``."""
        rects = []
        for row in self.rack_rows:
            x0 = self.row_x0(row)
            rects.append((x0, row.offset, x0 + row.length, row.offset + row.depth))
        return rects

    def slot_ids(self) -> List[str]:
        return [f"r{i}s{j}" for i, row in enumerate(self.rack_rows) for j in range(row.slot_count)]

    def slot_count(self) -> int:
        return sum(row.slot_count for row in self.rack_rows)

    def parse_slot_id(self, slot_id: str) -> Tuple[int, int]:
        try:
            r_part, s_part = slot_id[1:].split("s")
            row_idx, slot_idx = int(r_part), int(s_part)
        except (ValueError, IndexError):
            raise ValidationError(f"malformed slot id {slot_id!r}")
        if not (0 <= row_idx < len(self.rack_rows)):
            raise ValidationError(f"slot id {slot_id!r}: row {row_idx} does not exist")
        if not (0 <= slot_idx < self.rack_rows[row_idx].slot_count):
            raise ValidationError(f"slot id {slot_id!r}: slot {slot_idx} does not exist")
        return row_idx, slot_idx

    def slot_center(self, slot_id: str) -> Tuple[float, float]:
        """Center of the slot's footprint inside its rack."""
        row_idx, slot_idx = self.parse_slot_id(slot_id)
        row = self.rack_rows[row_idx]
        pitch = row.length / row.slot_count
        x = self.row_x0(row) + (slot_idx + 0.5) * pitch
        return (x, row.offset + row.depth / 2.0)

    def aisle_bands(self) -> List[Tuple[float, float]]:
        """y intervals of every aisle, front wall to back wall."""
        bands = []
        y = 0.0
        for row in sorted(self.rack_rows, key=lambda r: r.offset):
            bands.append((y, row.offset))
            y = row.offset + row.depth
        bands.append((y, self.floor_depth))
        return bands

    def num_aisles(self) -> int:
        return len(self.rack_rows) + 1

    # -- invariants ---------------------------------------------------------

    def validate(self, min_aisle_width: float | None = None) -> None:
        if self.floor_width <= 0 or self.floor_depth <= 0:
            raise ValidationError("floor dimensions must be positive")
        rows = sorted(self.rack_rows, key=lambda r: r.offset)
        for row in rows:
            if row.depth <= 0 or row.length <= 0 or row.slot_count < 1:
                raise ValidationError("rack rows need positive depth/length and >= 1 slot")
            if row.length > self.floor_width + GEOM_TOL:
                raise ValidationError("rack row longer than the floor is wide")
        if len(self.aisle_widths) != len(rows) + 1:
            raise ValidationError(
                f"expected {len(rows) + 1} aisle widths for {len(rows)} rows, "
                f"got {len(self.aisle_widths)}"
            )
        for i, a in enumerate(self.aisle_widths):
            if a < -GEOM_TOL:
                raise ValidationError(f"aisle width {i} must be non-negative")
            if min_aisle_width is not None and a < min_aisle_width - GEOM_TOL:
                raise ValidationError(f"aisle width {i} = {a} below minimum {min_aisle_width}")
        # aisle widths must agree with the gaps the offsets actually leave
        y = 0.0
        for i, row in enumerate(rows):
            gap = row.offset - y
            if abs(gap - self.aisle_widths[i]) > 1e-6:
                raise ValidationError(
                    f"aisle {i}: declared width {self.aisle_widths[i]} but geometric gap is {gap}"
                )
            if gap < -GEOM_TOL:
                raise ValidationError("rack rows overlap")
            y = row.offset + row.depth
        back_gap = self.floor_depth - y
        if abs(back_gap - self.aisle_widths[-1]) > 1e-6:
            raise ValidationError(
                f"back aisle: declared width {self.aisle_widths[-1]} but gap is {back_gap}"
            )
        total = sum(r.depth for r in rows) + sum(self.aisle_widths)
        if total > self.floor_depth + 1e-6:
            raise ValidationError("rack depths plus aisle widths exceed the floor depth")
        dx, dy = self.depot
        if not (0 <= dx <= self.floor_width and 0 <= dy <= self.floor_depth):
            raise ValidationError("depot lies outside the floor")
        for (x0, y0, x1, y1) in self.rack_rects():
            if x0 + GEOM_TOL < dx < x1 - GEOM_TOL and y0 + GEOM_TOL < dy < y1 - GEOM_TOL:
                raise ValidationError("depot lies inside a rack footprint")


def layout_from_aisle_widths(
    floor_width: float,
    floor_depth: float,
    row_specs: Sequence[Tuple[float, float, int]],
    aisle_widths: Sequence[float],
    depot: Tuple[float, float] | None = None,
) -> Layout:
    """Build a Layout whose row offsets follow from the given aisle widths.

    ``row_specs`` is a sequence of ``(depth, length, slot_count)``; aisles and
    rows alternate starting at the front wall.  The final aisle width is
    forced to whatever gap remains so the geometry closes exactly.
    """
    if len(aisle_widths) != len(row_specs) + 1:
        raise ValidationError("need one aisle width per gap, rows + 1 in total")
    rows = []
    y = 0.0
    for (depth, length, slots), a in zip(row_specs, aisle_widths):
        y += a
        rows.append(RackRow(offset=y, depth=depth, length=length, slot_count=slots))
        y += depth
    widths = list(aisle_widths[:-1]) + [floor_depth - y]
    if widths[-1] <= 0:
        raise ValidationError("rows and aisles do not fit within floor_depth")
    if depot is None:
        depot = (floor_width / 2.0, aisle_widths[0] / 2.0)
    layout = Layout(
        floor_width=floor_width,
        floor_depth=floor_depth,
        rack_rows=tuple(rows),
        aisle_widths=tuple(widths),
        depot=depot,
    )
    layout.validate()
    return layout


@dataclass(frozen=True)
class Product:
    id: str
    popularity_rank: int


@dataclass(frozen=True)
class Order:
    id: str
    timestamp: float
    lines: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple((str(p), int(q)) for p, q in self.lines))

    def validate(self, product_ids: set | None = None) -> None:
        if not self.lines:
            raise ValidationError(f"order {self.id} has no lines")
        for pid, qty in self.lines:
            if qty < 1:
                raise ValidationError(f"order {self.id}: quantity for {pid} must be >= 1")
            if product_ids is not None and pid not in product_ids:
                raise ValidationError(f"order {self.id}: unknown product {pid}")


@dataclass(frozen=True)
class SlotAssignment:
    """Injective mapping product_id -> slot_id."""

    mapping: Dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))

    def slot_of(self, product_id: str) -> str:
        return self.mapping[product_id]

    def occupied_slots(self) -> set:
        return set(self.mapping.values())

    def validate(self, layout: Layout, catalog: Sequence[Product] | None = None) -> None:
        seen = {}
        for pid, sid in self.mapping.items():
            layout.parse_slot_id(sid)
            if sid in seen:
                raise ValidationError(f"slot {sid} assigned to both {seen[sid]} and {pid}")
            seen[sid] = pid
        if catalog is not None:
            missing = {p.id for p in catalog} - set(self.mapping)
            if missing:
                raise ValidationError(f"products without a slot: {sorted(missing)[:5]}")


@dataclass(frozen=True)
class SimParams:
    picker_speed: float       # meters / second
    handle_time: float        # seconds per pick line
    cart_width: float         # meters
    shift_length: float       # hours
    clearance_coeff: float    # meters per (picks/hour); the flow-clearance k
    cell_size: float          # meters, route-graph discretization
    max_carts: int

    def validate(self) -> None:
        for name in ("picker_speed", "handle_time", "cart_width", "shift_length",
                     "clearance_coeff", "cell_size"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"SimParams.{name} must be strictly positive")
        if self.max_carts < 1:
            raise ValidationError("SimParams.max_carts must be a positive integer")


@dataclass(frozen=True)
class Instance:
    """The unit of persistence: layout + catalog + assignment + history + params."""

    layout: Layout
    catalog: Tuple[Product, ...]
    assignment: SlotAssignment
    history: Tuple[Order, ...]
    params: SimParams

    def __post_init__(self):
        object.__setattr__(self, "catalog", tuple(self.catalog))
        object.__setattr__(self, "history", tuple(self.history))

    def product_ids(self) -> set:
        return {p.id for p in self.catalog}

    def validate(self) -> None:
        self.layout.validate()
        self.params.validate()
        ids = [p.id for p in self.catalog]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate product ids in catalog")
        for p in self.catalog:
            if p.popularity_rank < 1:
                raise ValidationError(f"product {p.id}: popularity_rank must be >= 1")
        self.assignment.validate(self.layout, self.catalog)
        id_set = set(ids)
        for order in self.history:
            order.validate(id_set)

    def with_layout(self, layout: Layout) -> "Instance":
        return Instance(layout, self.catalog, self.assignment, self.history, self.params)

    def with_assignment(self, assignment: SlotAssignment) -> "Instance":
        return Instance(self.layout, self.catalog, assignment, self.history, self.params)


def utilization(layout: Layout) -> float:
    """Total rack footprint area divided by floor area, in [0, 1]."""
    rack_area = sum(r.depth * r.length for r in layout.rack_rows)
    return rack_area / (layout.floor_width * layout.floor_depth)
