import pytest

from wsdo.core import (
    Layout,
    RackRow,
    build_route_graph,
    default_benchmark_instance,
    generate_instance,
)


def open_floor(width=5.0, depth=5.0, depot=(0.5, 0.5)):
    """Layout with no racks: a single aisle spanning the whole floor."""
    return Layout(
        floor_width=width,
        floor_depth=depth,
        rack_rows=(),
        aisle_widths=(depth,),
        depot=depot,
    )


def two_row_layout():
    """Small layout: 10 x 8 floor, two rack rows of 4 slots each."""
    return Layout(
        floor_width=10.0,
        floor_depth=8.0,
        rack_rows=(
            RackRow(offset=2.0, depth=1.0, length=6.0, slot_count=4),
            RackRow(offset=5.0, depth=1.0, length=6.0, slot_count=4),
        ),
        aisle_widths=(2.0, 2.0, 2.0),
        depot=(5.0, 1.0),
    )


@pytest.fixture(scope="session")
def default_instance():
    return default_benchmark_instance(seed=42)


@pytest.fixture(scope="session")
def default_graph(default_instance):
    return build_route_graph(default_instance.layout, default_instance.params.cell_size)


@pytest.fixture(scope="session")
def small_instance():
    from wsdo.core import GenParams, LayoutTemplate

    params = GenParams(
        num_products=24,
        num_orders=60,
        zipf_exponent=1.0,
        mean_lines_per_order=3.0,
        template=LayoutTemplate(
            floor_width=14.0,
            floor_depth=12.0,
            num_rows=2,
            rack_depth=1.0,
            rack_length=8.0,
            slots_per_row=16,
            aisle_width=2.0,
        ),
    )
    return generate_instance(5, params)
