import json

import pytest
from hypothesis import given, settings, strategies as st

from ddu_dro.generator import (
    generate_benchmark, generate_tiny, golden_instance, minimal_instance,
)
from ddu_dro.instance import (
    AmbiguityEmptyError, ValidationError, capital_recovery,
    instance_from_dict, instance_to_json, load_instance,
)


def test_minimal_instance_loads(tmp_path):
    inst = minimal_instance()
    assert inst.time.n == 2
    path = tmp_path / "m.json"
    path.write_text(instance_to_json(inst))
    again = load_instance(path)
    assert again.to_dict() == inst.to_dict()


def test_round_trip_all_generators(tmp_path):
    for inst in (generate_tiny(5, vessel=True), generate_benchmark(5, 0.7, 3),
                 golden_instance()):
        p = tmp_path / f"{inst.name}.json"
        p.write_text(instance_to_json(inst))
        again = load_instance(p)
        assert again.to_dict() == inst.to_dict()


def test_malformed_document(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError, match="malformed"):
        load_instance(p)


def test_ambiguity_empty_probability_mass():
    d = minimal_instance().to_dict()
    d["wind_levels"] = [dict(d["wind_levels"][0]) for _ in range(2)]
    d["wind_levels"][1]["id"] = "L2"
    for lv in d["wind_levels"]:
        lv["prob_bounds"] = [0.6, 0.8]
    with pytest.raises(AmbiguityEmptyError, match="ambiguity set empty"):
        instance_from_dict(d)


def test_separation_margin_violation():
    d = generate_tiny(1, hardenable=True).to_dict()
    edge = next(iter(d["uncertainty"]["moments"]["line_intact"]))
    d["uncertainty"]["moments"]["line_intact"][edge] = [0.9, 0.95]
    d["uncertainty"]["hardening_moment_drop"][edge] = 0.1
    with pytest.raises(ValidationError, match="separation violated"):
        instance_from_dict(d)


def test_duplicate_node_id():
    d = minimal_instance().to_dict()
    d["resource_islands"][0]["nodes"][0]["id"] = "Dn"
    with pytest.raises(ValidationError, match="duplicate node id"):
        instance_from_dict(d)


def test_non_radial_grid_rejected():
    d = generate_tiny(1).to_dict()
    isl = d["load_islands"][0]
    isl["edges"].append(dict(isl["edges"][0], id="dup"))
    with pytest.raises(ValidationError, match="radial"):
        instance_from_dict(d)


def test_moment_outside_box_rejected():
    d = generate_tiny(1).to_dict()
    node = next(iter(d["uncertainty"]["moments"]["load_p_mw"]))
    d["uncertainty"]["moments"]["load_p_mw"][node] = [[99.0, 100.0],
                                                      [99.0, 100.0]]
    with pytest.raises(AmbiguityEmptyError, match="does not intersect"):
        instance_from_dict(d)


def test_unsupported_schema():
    d = minimal_instance().to_dict()
    d["schema"] = "other/9"
    with pytest.raises(ValidationError, match="unsupported schema"):
        instance_from_dict(d)


# -- capital recovery --------------------------------------------------------


def test_capital_recovery_single_year():
    assert capital_recovery(0.05, 1) == pytest.approx(1.05)


def test_capital_recovery_reference_point():
    # frozen from an extended-precision evaluation of the closed form
    assert capital_recovery(0.08, 20) == pytest.approx(0.101852, abs=1e-6)


def test_capital_recovery_vanishing_rate_limit():
    assert capital_recovery(1e-9, 10) == pytest.approx(0.1, abs=1e-6)


def test_capital_recovery_domain():
    with pytest.raises(ValueError):
        capital_recovery(0.0, 10)
    with pytest.raises(ValueError):
        capital_recovery(0.05, 0.5)


@settings(max_examples=60, deadline=None)
@given(rr=st.floats(0.005, 0.5), years=st.floats(1.0, 40.0))
def test_capital_recovery_monotonic(rr, years):
    assert capital_recovery(rr, years + 1.0) < capital_recovery(rr, years)
    assert capital_recovery(rr + 0.01, years) > capital_recovery(rr, years)


# -- generators ---------------------------------------------------------------


def test_benchmark_determinism():
    a = instance_to_json(generate_benchmark(5, 0.5, 42))
    b = instance_to_json(generate_benchmark(5, 0.5, 42))
    assert a == b


def test_benchmark_load_scaling_contract():
    lo = generate_benchmark(5, 0.5, 42)
    hi = generate_benchmark(5, 0.9, 42)
    assert [e.id for e in lo.load_islands[0].edges] == \
        [e.id for e in hi.load_islands[0].edges]
    assert lo.resource_islands[0] == hi.resource_islands[0]
    for node in lo.uncertainty.load_p_box:
        if node.startswith("Rn"):
            continue  # induced service demand does not scale with load
        for blo, bhi in zip(lo.uncertainty.load_p_box[node],
                            hi.uncertainty.load_p_box[node]):
            for x, y in zip(blo, bhi):
                assert y == pytest.approx(1.8 * x, rel=1e-6)


def test_tiny_determinism_and_validity():
    a = instance_to_json(generate_tiny(7, vessel=True))
    b = instance_to_json(generate_tiny(7, vessel=True))
    assert a == b


def test_golden_topology_names():
    g = golden_instance()
    hard = [e.id for _, e in g.hardenable_edges()]
    assert hard == ["E2-5", "E11-12"]
    assert len(g.load_islands[0].nodes) == 12
