import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsim.engine import AttackPrimitive, AttackScenario, default_initial_state, run
from icsim.errors import ContractViolation
from icsim.plant import PlantModel, plant_from_dict, plant_to_dict
from icsim.slicer import (
    CONTROL_EDGE,
    PHYSICAL_EDGE,
    ModelSlice,
    ThreatCapability,
    ThreatIntent,
    dependency_graph,
    load_threat,
    reachable,
    relevant_statements,
    restrict_model,
    slice_model,
)


@pytest.fixture(scope="module")
def two_tank(toy):
    """Toy plant plus an independent tank T2 with its own fill loop."""
    data = plant_to_dict(toy)
    data["tanks"].append(dict(data["tanks"][0], id="T2"))
    data["flow_elements"].append({"id": "Pump_2", "kind": "pump", "design_flow_rate": 1.0})
    data["sensors"] += [{"id": "L2", "kind": "level", "attachment": "T2"}, {"id": "F3", "kind": "flow", "attachment": "PATH-2"}]
    data["flow_paths"].append({"id": "PATH-2", "source": "external-supply", "sink": "T2", "elements": ["Pump_2"]})
    data["control_statements"] += [
        {"id": "CS-3", "condition": [{"sensor": "L2", "comparator": "<=", "threshold": 200.0}],
         "actions": [{"actuator": "Pump_2", "state": "on"}]},
        {"id": "CS-4", "condition": [{"sensor": "L2", "comparator": ">=", "threshold": 800.0}],
         "actions": [{"actuator": "Pump_2", "state": "off"}]},
    ]
    return plant_from_dict(data)


def edges(g, kind=None):
    return {(u, v) for u, v, k in g.edges(data="kind") if kind is None or k == kind}


def test_toy_dependency_edges(toy):
    assert edges(dependency_graph(toy)) == {
        ("L1", "Pump_in"), ("L1", "Pump_out"),
        ("Pump_in", "F1"), ("Pump_out", "F2"),
        ("Pump_in", "L1"), ("Pump_out", "L1"),
    }


def test_toy_edge_kinds(toy):
    g = dependency_graph(toy)
    assert edges(g, CONTROL_EDGE) == {("L1", "Pump_in"), ("L1", "Pump_out")}
    assert len(edges(g, PHYSICAL_EDGE)) == 4


def test_bare_plant_has_no_edges():
    model = plant_from_dict({
        "tanks": [{"id": "T", "cross_section_area": 1.0, "physical_height": 1000.0, "overflow_level": 900.0,
                   "underflow_level": 100.0, "initial_level": 500.0}],
        "sensors": [{"id": "L", "kind": "level", "attachment": "T"}],
    })
    assert edges(dependency_graph(model)) == set()


def test_swat_high_high_guard_edge(swat):
    g = dependency_graph(swat)
    assert g.edges["LIT-301", "MV-201"]["kind"] == CONTROL_EDGE


def test_toy_relevant_statements(toy):
    assert relevant_statements(toy, ThreatIntent({"F2"})) == ["CS-1", "CS-2"]


def test_isolated_metric_sensor_has_no_relevant_statements(two_tank):
    data = plant_to_dict(two_tank)
    data["tanks"].append(dict(data["tanks"][0], id="T9"))
    data["sensors"].append({"id": "L9", "kind": "level", "attachment": "T9"})
    model = plant_from_dict(data)
    assert relevant_statements(model, ThreatIntent({"L9"})) == []


def test_closure_stays_inside_the_connected_loop(two_tank):
    assert relevant_statements(two_tank, ThreatIntent({"F2"})) == ["CS-1", "CS-2"]
    assert relevant_statements(two_tank, ThreatIntent({"F3"})) == ["CS-3", "CS-4"]


def test_final_product_flow_pulls_in_every_stage(swat):
    assert relevant_statements(swat, ThreatIntent({"FIT-502"})) == [c.id for c in swat.control_statements]
    assert len(swat.control_statements) == 10


def test_unknown_metric_sensor_rejected(toy):
    with pytest.raises(ContractViolation, match="LIT-999"):
        relevant_statements(toy, ThreatIntent({"LIT-999"}))


def test_toy_slice_under_level_sensor_capability(toy):
    s = slice_model(toy, ThreatIntent({"F2"}), ThreatCapability(sensors={"L1"}))
    assert s == ModelSlice(("L1", "F1", "F2"), ("Pump_in", "Pump_out"), ("CS-1", "CS-2"))


def test_full_capability_keeps_whole_swat_model(swat):
    s = slice_model(swat, ThreatIntent({"FIT-502"}), ThreatCapability.everything(swat))
    assert set(s.sensors) == {x.id for x in swat.sensors}
    assert set(s.actuators) == {e.id for e in swat.flow_elements}
    assert list(s.control_statements) == [c.id for c in swat.control_statements]


def test_capability_outside_relevant_loop_gives_empty_slice(two_tank):
    s = slice_model(two_tank, ThreatIntent({"F2"}), ThreatCapability(sensors={"L2"}, actuators={"Pump_2"}))
    assert s.empty
    assert s.to_dict() == {"sensors": [], "actuators": [], "control_statements": []}


@pytest.mark.parametrize("cap", [ThreatCapability(), ThreatCapability(sensors={"nope"})])
def test_invalid_capability_rejected(toy, cap):
    with pytest.raises(ContractViolation):
        slice_model(toy, ThreatIntent({"F2"}), cap)


def test_empty_intent_rejected(toy):
    with pytest.raises(ContractViolation, match="metric sensor"):
        slice_model(toy, ThreatIntent(()), ThreatCapability(sensors={"L1"}))


def test_reachable_follows_influence(two_tank):
    assert reachable(two_tank, ThreatCapability(actuators={"Pump_out"})) == {"Pump_out", "F2", "L1", "Pump_in", "F1"}
    assert reachable(two_tank, ThreatCapability(sensors={"F1"})) == {"F1"}


def test_threat_file_round_trip(tmp_path, toy):
    path = tmp_path / "threat.json"
    path.write_text(json.dumps({"intent": {"metric_sensors": ["F2"]}, "capability": {"sensors": ["L1"]}}))
    intent, cap = load_threat(path)
    assert intent == ThreatIntent({"F2"})
    assert cap == ThreatCapability(sensors={"L1"})
    (tmp_path / "bad.json").write_text(json.dumps({"capability": {}}))
    with pytest.raises(ContractViolation, match="intent"):
        load_threat(tmp_path / "bad.json")


# ---------------------------------------------------------------- properties


def _components(model: PlantModel):
    return [s.id for s in model.sensors] + [e.id for e in model.flow_elements]


def _capability(model, chosen):
    sensors = {c for c in chosen if c in model.sensor_by_id}
    return ThreatCapability(sensors, set(chosen) - sensors)


@st.composite
def nested_capabilities(draw, comps):
    small = draw(st.sets(st.sampled_from(comps), min_size=1))
    extra = draw(st.sets(st.sampled_from(comps)))
    return small, small | extra


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_enlarging_capability_never_shrinks_slice(two_tank, data):
    comps = _components(two_tank)
    metric = data.draw(st.sets(st.sampled_from([s.id for s in two_tank.sensors]), min_size=1))
    small, big = data.draw(nested_capabilities(comps))
    intent = ThreatIntent(metric)
    a = slice_model(two_tank, intent, _capability(two_tank, small))
    b = slice_model(two_tank, intent, _capability(two_tank, big))
    assert set(a.sensors) <= set(b.sensors)
    assert set(a.actuators) <= set(b.actuators)
    assert set(a.control_statements) <= set(b.control_statements)


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_slicing_a_sliced_model_is_stable(two_tank, data):
    comps = _components(two_tank)
    metric = data.draw(st.sets(st.sampled_from([s.id for s in two_tank.sensors]), min_size=1))
    cap = _capability(two_tank, data.draw(st.sets(st.sampled_from(comps), min_size=1)))
    intent = ThreatIntent(metric)
    once = slice_model(two_tank, intent, cap)
    twice = slice_model(restrict_model(two_tank, once), intent, cap)
    assert twice == once


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_every_slice_statement_references_a_slice_component(two_tank, data):
    comps = _components(two_tank)
    metric = data.draw(st.sets(st.sampled_from([s.id for s in two_tank.sensors]), min_size=1))
    cap = _capability(two_tank, data.draw(st.sets(st.sampled_from(comps), min_size=1)))
    s = slice_model(two_tank, ThreatIntent(metric), cap)
    keep = set(s.sensors) | set(s.actuators)
    g = dependency_graph(two_tank)
    for cid in s.control_statements:
        c = two_tank.statement_by_id[cid]
        moved = {x for a in c.actuators for x in g.successors(a)}
        assert (set(c.sensors) | set(c.actuators) | moved) & keep


# ---------------------------------------------------------------- brute-force soundness


def _extreme_primitives(model, comp):
    if comp in model.sensor_by_id:
        sensor = model.sensor_by_id[comp]
        top = model.tank(sensor.attachment).physical_height if sensor.kind == "level" else 10.0
        return [AttackPrimitive("sensor_spoof", comp, v, 0.0, 1e9) for v in (0.0, top)]
    return [AttackPrimitive("actuator_command_spoof", comp, lab, 0.0, 1e9) for lab in model.element(comp).state_labels]


def _influences(model, comp, metrics, normal):
    for prim in _extreme_primitives(model, comp):
        trace = run(model, default_initial_state(model), AttackScenario("probe", (prim,)), 1.0, 2400.0)
        for m in metrics:
            if not np.array_equal(trace.sensor(m, "physical"), normal.sensor(m, "physical")):
                return True
    return False


@pytest.mark.parametrize("metric", [{"F2"}, {"F1"}, {"L1"}, {"F3"}, {"F2", "L2"}])
def test_influential_spoofs_target_slice_members(two_tank, metric):
    normal = run(two_tank, default_initial_state(two_tank), None, 1.0, 2400.0)
    comps = _components(two_tank)
    influential = {c for c in comps if _influences(two_tank, c, metric, normal)}
    # exhaustive over every capability of size one or two
    for r in (1, 2):
        for chosen in itertools.combinations(comps, r):
            s = slice_model(two_tank, ThreatIntent(metric), _capability(two_tank, chosen))
            members = set(s.sensors) | set(s.actuators)
            for c in set(chosen) & influential:
                assert c in members, (chosen, c, s)


def test_toy_brute_force_agrees_with_slice(toy):
    normal = run(toy, default_initial_state(toy), None, 1.0, 2400.0)
    s = slice_model(toy, ThreatIntent({"F2"}), ThreatCapability(sensors={"L1"}))
    members = set(s.sensors) | set(s.actuators)
    influential = {c for c in _components(toy) if _influences(toy, c, {"F2"}, normal)}
    # spoofing a flow sensor alters only its cyber reading, which no statement reads
    assert influential == {"L1", "Pump_in", "Pump_out"}
    assert influential <= members
