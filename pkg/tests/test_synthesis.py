import json

import pytest

from model.errors import DomainError, LayoutError, SynthesisError, WiringError
from model.types import Surface
from synthesis.layout import (
    SINK,
    SOURCE,
    THRESHOLD,
    CircuitLayout,
    Population,
    check_orthogonality,
    evaluate_backend,
    export_layout_dot,
    lane_count,
    synthesize_layout,
)
from synthesis.logic import (
    all_input_codes,
    binary_code,
    contains_and,
    evaluate_expressions,
    ilf_backend,
    ilf_pairs,
    ilf_top_index,
    not_depth,
    sop_backend,
    sop_from_table,
    thermometer_code,
    thermometer_decode_table,
)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_ilf_and_sop_reproduce_the_table(m):
    table = thermometer_decode_table(m)
    assert len(table) == 2**m
    ilf, sop = ilf_backend(m), sop_backend(m)
    for code, expected in table.items():
        assert evaluate_expressions(ilf, code) == expected
        assert evaluate_expressions(sop, code) == expected


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_ilf_needs_only_or_and_two_levels_of_not(m):
    for expr in ilf_backend(m):
        assert not contains_and(expr)
        assert not_depth(expr) <= 2


def test_qcsk_expressions():
    y0, y1 = ilf_backend(2)
    assert str(y1) == "B1"
    assert str(y0) == "B2 + NOT(B1 + NOT B0)"
    assert ilf_top_index(2, 0) == 2
    assert ilf_pairs(2, 0) == [(1, 0)]


def test_thermometer_and_binary_codes():
    assert thermometer_code(2, 0) == (0, 0, 0)
    assert thermometer_code(2, 2) == (0, 1, 1)
    assert binary_code(3, 6) == (1, 1, 0)
    with pytest.raises(DomainError):
        thermometer_code(2, 4)
    with pytest.raises(DomainError):
        thermometer_decode_table(0)


def test_sop_treats_missing_rows_as_dont_care():
    table = {(0, 1): (1,), (1, 1): (0,)}
    (y,) = sop_from_table(table)
    for code, expected in table.items():
        assert evaluate_expressions([y], code) == expected
    assert len(list(all_input_codes(2))) == 4
    with pytest.raises(DomainError):
        sop_from_table({})


@pytest.mark.parametrize("m, lane_width", [(1, None), (2, None), (3, None), (4, 2.0)])
def test_layout_backend_matches_table(geometry, m, lane_width):
    layout = synthesize_layout(m, geometry, lane_width=lane_width)
    for code, expected in thermometer_decode_table(m).items():
        assert evaluate_backend(layout, code) == expected


def test_qcsk_layout_structure(geometry):
    layout = synthesize_layout(2, geometry)
    s0, s1 = layout.sources
    assert s0.lane == Surface(10.0, 15.0)
    assert s1.lane == Surface(0.0, 10.0)
    assert len(layout.of_kind(THRESHOLD)) == 4
    assert {p.threshold for p in layout.of_kind(THRESHOLD)} == {0.1, 0.45, 0.7}
    assert [s.name for s in layout.sinks] == ["Y0", "Y1"]
    assert layout.production_factor == 40.0
    for edge in layout.edges:
        assert layout.distance(edge) > 0
    assert layout.topological_order()[0] in {p.name for p in layout.of_kind(SOURCE)}


def test_tx_lanes_scale_with_bit_weight(geometry):
    layout = synthesize_layout(3, geometry)
    widths = [s.lane.width for s in layout.sources]
    assert widths[1] == pytest.approx(2 * widths[0])
    assert widths[2] == pytest.approx(4 * widths[0])


def test_high_order_needs_wider_lanes(geometry):
    assert lane_count(4) == 26
    with pytest.raises(SynthesisError, match="narrower than a cell"):
        synthesize_layout(4, geometry)


def test_too_few_species(geometry):
    with pytest.raises(SynthesisError, match="short by 1"):
        synthesize_layout(2, geometry, species=("aCa", "aCa", "DOX"))


def test_overlapping_emitters_are_rejected(geometry):
    layout = CircuitLayout(1, geometry)
    layout.add(Population("a", SOURCE, Surface(0.0, 6.0), 0, output_species="aCa", bit=0))
    layout.add(Population("b", SOURCE, Surface(5.0, 10.0), 0, output_species="aCa", bit=1))
    with pytest.raises(LayoutError, match="overlapping"):
        check_orthogonality(layout)


def test_wiring_mismatch(geometry):
    layout = CircuitLayout(1, geometry)
    layout.add(Population("s", SOURCE, Surface(0.0, 5.0), 0, output_species="aCa", bit=0))
    layout.add(Population("y", SINK, Surface(0.0, 5.0), 5, input_species="DOX", bit=0))
    with pytest.raises(WiringError):
        layout.connect("s", "y")


def test_cycle_is_rejected(geometry):
    layout = CircuitLayout(1, geometry)
    layout.add(Population("a", "ID", Surface(0.0, 5.0), 1, "aCa", "aCa"))
    layout.add(Population("b", "ID", Surface(0.0, 5.0), 3, "aCa", "aCa"))
    layout.connect("a", "b")
    layout.connect("b", "a")
    with pytest.raises(LayoutError, match="cycle"):
        layout.topological_order()


def test_layout_json_round_trip(geometry):
    layout = synthesize_layout(2, geometry)
    data = json.loads(layout.to_json())
    again = CircuitLayout.from_dict(data)
    assert again.to_dict() == layout.to_dict()


def test_dot_export_lists_every_population(geometry):
    layout = synthesize_layout(2, geometry)
    dot = export_layout_dot(layout)
    assert dot.startswith("digraph csk_m2 {")
    for name in layout.populations:
        assert f'"{name}"' in dot
    assert dot.count('" -> "') == len(layout.edges)
