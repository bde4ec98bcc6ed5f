"""Instance JSON serialization.

One JSON document with top-level keys ``layout`` / ``catalog`` /
``assignment`` / ``history`` / ``params``; lengths in meters, times in
seconds.  Output is deterministic (sorted keys, fixed indentation) so that
regenerating a file with the same seed is byte-identical.
"""

from __future__ import annotations

import json
from typing import Any, Dict

from ..errors import ValidationError
from .model import Instance, Layout, Order, Product, RackRow, SimParams, SlotAssignment


def layout_to_dict(layout: Layout) -> Dict[str, Any]:
    return {
        "floor_width": layout.floor_width,
        "floor_depth": layout.floor_depth,
        "rack_rows": [
            {"offset": r.offset, "depth": r.depth, "length": r.length, "slot_count": r.slot_count}
            for r in layout.rack_rows
        ],
        "aisle_widths": list(layout.aisle_widths),
        "depot": [layout.depot[0], layout.depot[1]],
    }


def layout_from_dict(d: Dict[str, Any]) -> Layout:
    return Layout(
        floor_width=d["floor_width"],
        floor_depth=d["floor_depth"],
        rack_rows=tuple(
            RackRow(offset=r["offset"], depth=r["depth"], length=r["length"],
                    slot_count=int(r["slot_count"]))
            for r in d["rack_rows"]
        ),
        aisle_widths=tuple(d["aisle_widths"]),
        depot=(d["depot"][0], d["depot"][1]),
    )


def instance_to_dict(instance: Instance) -> Dict[str, Any]:
    return {
        "layout": layout_to_dict(instance.layout),
        "catalog": [{"id": p.id, "popularity_rank": p.popularity_rank} for p in instance.catalog],
        "assignment": dict(instance.assignment.mapping),
        "history": [
            {"id": o.id, "timestamp": o.timestamp, "lines": [[p, q] for p, q in o.lines]}
            for o in instance.history
        ],
        "params": {
            "picker_speed": instance.params.picker_speed,
            "handle_time": instance.params.handle_time,
            "cart_width": instance.params.cart_width,
            "shift_length": instance.params.shift_length,
            "clearance_coeff": instance.params.clearance_coeff,
            "cell_size": instance.params.cell_size,
            "max_carts": instance.params.max_carts,
        },
    }


def instance_from_dict(d: Dict[str, Any]) -> Instance:
    try:
        instance = Instance(
            layout=layout_from_dict(d["layout"]),
            catalog=tuple(Product(id=p["id"], popularity_rank=int(p["popularity_rank"]))
                          for p in d["catalog"]),
            assignment=SlotAssignment(dict(d["assignment"])),
            history=tuple(
                Order(id=o["id"], timestamp=float(o["timestamp"]),
                      lines=tuple((p, int(q)) for p, q in o["lines"]))
                for o in d["history"]
            ),
            params=SimParams(**d["params"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed instance document: {exc}") from exc
    instance.validate()
    return instance


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), sort_keys=True, indent=2) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_instance(instance))


def load_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_instance(fh.read())
