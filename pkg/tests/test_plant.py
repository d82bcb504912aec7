import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsim.errors import ContractViolation
from icsim.plant import (
    FlowPath,
    load_plant,
    path_design_rate,
    plant_from_dict,
    plant_to_dict,
    resolve_path_flow,
    validate_plant,
)


def test_toy_plant_is_valid(toy):
    assert validate_plant(toy) == []
    assert len(toy.tanks) == 1
    assert [e.kind for e in toy.flow_elements] == ["pump", "pump"]
    assert len(toy.sensors) == 3
    assert len(toy.control_statements) == 2


def test_swat_plant_is_valid(swat):
    assert validate_plant(swat) == []


def test_dangling_sensor_reference_reported_once(toy):
    data = plant_to_dict(toy)
    data["control_statements"][0]["condition"][0]["sensor"] = "LIT-999"
    problems = validate_plant(plant_from_dict(data, validate=False))
    assert len(problems) == 1
    assert "LIT-999" in problems[0]


def test_tank_with_equal_overflow_and_underflow_reported(toy):
    tank = dataclasses.replace(toy.tanks[0], underflow_level=500.0, overflow_level=500.0)
    problems = validate_plant(dataclasses.replace(toy, tanks=(tank,)))
    assert len(problems) == 1
    assert "underflow_level < overflow_level" in problems[0]


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d["tanks"][0].update(cross_section_area=0.0), "cross_section_area"),
        (lambda d: d["tanks"][0].update(initial_level=2000.0), "initial_level"),
        (lambda d: d["flow_elements"][0].update(design_flow_rate=-1.0), "design_flow_rate"),
        (lambda d: d["sensors"][1].update(attachment="PATH-nowhere"), "unknown flow path"),
        (lambda d: d["flow_paths"][1].update(elements=["Pump_in"]), "appears on paths"),
        (lambda d: d["flow_paths"][1].update(sink="T1"), "source equals sink"),
        (lambda d: d["flow_paths"][0].update(yield_fraction=1.5), "yield_fraction"),
        (lambda d: d["sensors"].append({"id": "T1", "kind": "level", "attachment": "T1"}), "duplicate id"),
        (lambda d: d["control_statements"][0]["actions"].append({"actuator": "L1", "state": "on"}), "not a flow element"),
        (lambda d: d["control_statements"][0].update(condition=[]), "empty condition"),
        (lambda d: d["thresholds"].update({"X9.high": 3.0}), "threshold"),
    ],
)
def test_each_invariant_reported(toy, mutate, fragment):
    data = plant_to_dict(toy)
    mutate(data)
    problems = validate_plant(plant_from_dict(data, validate=False))
    assert any(fragment in p for p in problems), problems


def test_invalid_config_raises_on_load(toy, tmp_path):
    data = plant_to_dict(toy)
    data["tanks"][0]["overflow_level"] = 5000.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ContractViolation, match="T1"):
        load_plant(path)


def test_missing_field_is_a_contract_violation():
    with pytest.raises(ContractViolation, match="cross_section_area"):
        plant_from_dict({"tanks": [{"id": "T1", "physical_height": 1.0, "overflow_level": 1.0}]})


def test_symbolic_thresholds_resolve_and_round_trip(toy):
    cs1 = toy.statement_by_id["CS-1"]
    assert cs1.condition[0].threshold == 800.0
    assert cs1.condition[0].threshold_ref == "L1.high"
    again = plant_from_dict(plant_to_dict(toy))
    assert again == toy


def test_unknown_symbolic_threshold_rejected(toy):
    data = plant_to_dict(toy)
    data["control_statements"][0]["condition"][0]["threshold"] = "L1.veryhigh"
    with pytest.raises(ContractViolation, match="L1.veryhigh"):
        plant_from_dict(data)


# ---------------------------------------------------------------- resolve_path_flow


def _throughput_plant(toy):
    # single valve path at plant throughput from an external supply
    data = plant_to_dict(toy)
    data["flow_elements"].append({"id": "MV-101", "kind": "valve", "design_flow_rate": 1.14})
    data["tanks"].append(dict(data["tanks"][0], id="T-101"))
    data["flow_paths"].append({"id": "PATH-101", "source": "external-supply", "sink": "T-101", "elements": ["MV-101"]})
    return plant_from_dict(data)


def test_open_valve_from_external_supply_delivers_design_rate(toy):
    model = _throughput_plant(toy)
    flow, event = resolve_path_flow(model, model.path("PATH-101"), {"MV-101": "open"}, None)
    assert flow == 1.14
    assert event is None


def test_disabled_pump_blocks_flow_without_event(swat):
    path = swat.path("PATH-201")
    flow, event = resolve_path_flow(swat, path, {"P-101": "off", "MV-201": "open"}, 600.0)
    assert flow == 0.0
    assert event is None


def test_enabled_pump_on_empty_tank_dry_runs(swat):
    flow, event = resolve_path_flow(swat, swat.path("PATH-301"), {"P-301": "on"}, 0.0)
    assert flow == 0.0
    assert event == ("dry_run", "P-301")


def test_dry_run_confirmed_by_stepping_toy_until_empty(toy):
    from icsim.engine import AttackPrimitive, AttackScenario, initial_state_from, run

    drain = AttackScenario("drain", (
        AttackPrimitive("actuator_command_spoof", "Pump_out", "on", 0.0, 1e9),
        AttackPrimitive("actuator_command_spoof", "Pump_in", "off", 0.0, 1e9),
    ))
    state = initial_state_from(toy, {"L1": 10.0}, {"Pump_in": "off", "Pump_out": "on"})
    trace = run(toy, state, drain, 1.0, 120.0)
    kinds = [(e.kind, e.component) for e in trace.events]
    assert ("dry_run", "Pump_out") in kinds
    assert trace.sensor("F2")[-1] == 0.0


def test_unknown_actuator_is_a_contract_violation(swat):
    with pytest.raises(ContractViolation, match="P-999"):
        resolve_path_flow(swat, swat.path("PATH-301"), {"P-301": "on", "P-999": "on"}, 500.0)


def test_missing_actuator_state_is_a_contract_violation(swat):
    with pytest.raises(ContractViolation, match="MV-201"):
        resolve_path_flow(swat, swat.path("PATH-201"), {"P-101": "on"}, 500.0)


def test_rate_limiting_element_sets_design_rate(swat):
    path = swat.path("PATH-201")
    assert path_design_rate(swat, path) == min(swat.element("P-101").design_flow_rate, swat.element("MV-201").design_flow_rate)


path_ids = st.sampled_from(["PATH-101", "PATH-201", "PATH-301", "PATH-401"])


@settings(max_examples=200, deadline=None)
@given(path_ids, st.lists(st.booleans(), min_size=2, max_size=2), st.floats(0.0, 1300.0))
def test_flow_is_zero_or_rate_limited_design(swat, pid, states, level):
    path = swat.path(pid)
    acts = {e: swat.element(e).label(on) for e, on in zip(path.elements, states)}
    src = None if path.source == "external-supply" else level
    flow, _ = resolve_path_flow(swat, path, acts, src)
    assert flow in (0.0, path_design_rate(swat, path) * path.yield_fraction)
    # pure: same inputs, same outputs
    assert resolve_path_flow(swat, path, acts, src) == (flow, _)


@settings(max_examples=100, deadline=None)
@given(path_ids, st.data(), st.floats(1.0, 1300.0))
def test_disabling_any_single_element_stops_flow(swat, pid, data, level):
    path = swat.path(pid)
    off = data.draw(st.sampled_from(path.elements))
    acts = {e: swat.element(e).label(e != off) for e in path.elements}
    src = None if path.source == "external-supply" else level
    assert resolve_path_flow(swat, path, acts, src)[0] == 0.0


def test_pass_through_path_follows_upstream_flow(swat):
    ro = swat.path("PATH-501")
    full, _ = resolve_path_flow(swat, ro, {"P-501": "on"}, 1.72)
    assert full == pytest.approx(1.72 * ro.yield_fraction)
    dry, event = resolve_path_flow(swat, ro, {"P-501": "on"}, 0.0)
    assert dry == 0.0 and event == ("dry_run", "P-501")


def test_plant_model_is_immutable(toy):
    with pytest.raises(dataclasses.FrozenInstanceError):
        toy.name = "other"
    assert isinstance(toy.path("PATH-in"), FlowPath)
