"""Threat-model-guided reduction of a plant to the components an attacker can matter for.

An attacker's intent names the metric sensors they want to disturb, their
capability names the sensors and actuators they control. The slice keeps the
sensors, actuators and control statements that both relate to the metrics and are
reachable from the capability through control or physical dependencies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Set, Tuple, Union

import networkx as nx

from .errors import ContractViolation
from .plant import FLOW, PlantModel, ordered, require_known

CONTROL_EDGE = "control"
PHYSICAL_EDGE = "physical"


@dataclass(frozen=True)
class ThreatIntent:
    metric_sensors: FrozenSet[str]

    def __init__(self, metric_sensors: Iterable[str]):
        object.__setattr__(self, "metric_sensors", frozenset(metric_sensors))

    def check(self, model: PlantModel) -> None:
        if not self.metric_sensors:
            raise ContractViolation("threat intent needs at least one metric sensor")
        require_known(model, sensors=self.metric_sensors)


@dataclass(frozen=True)
class ThreatCapability:
    sensors: FrozenSet[str]
    actuators: FrozenSet[str]

    def __init__(self, sensors: Iterable[str] = (), actuators: Iterable[str] = ()):
        object.__setattr__(self, "sensors", frozenset(sensors))
        object.__setattr__(self, "actuators", frozenset(actuators))

    @classmethod
    def everything(cls, model: PlantModel) -> "ThreatCapability":
        return cls((s.id for s in model.sensors), (e.id for e in model.flow_elements))

    @property
    def components(self) -> FrozenSet[str]:
        return self.sensors | self.actuators

    def check(self, model: PlantModel) -> None:
        if not self.components:
            raise ContractViolation("threat capability needs at least one sensor or actuator")
        require_known(model, sensors=self.sensors, actuators=self.actuators)


@dataclass(frozen=True)
class ModelSlice:
    sensors: Tuple[str, ...]
    actuators: Tuple[str, ...]
    control_statements: Tuple[str, ...]

    @property
    def empty(self) -> bool:
        return not (self.sensors or self.actuators or self.control_statements)

    def to_dict(self) -> Dict[str, List[str]]:
        return {
            "sensors": list(self.sensors),
            "actuators": list(self.actuators),
            "control_statements": list(self.control_statements),
        }


def dependency_graph(model: PlantModel) -> nx.DiGraph:
    """Directed sensor/actuator graph of control (sensor to actuator) and physical edges."""
    g = nx.DiGraph()
    for s in model.sensors:
        g.add_node(s.id, kind="sensor")
    for e in model.flow_elements:
        g.add_node(e.id, kind="actuator")
    for c in model.control_statements:
        for s in c.sensors:
            for a in c.actuators:
                g.add_edge(s, a, kind=CONTROL_EDGE)
    for s in model.sensors:
        if s.kind == FLOW:
            paths = model.upstream_paths(s.attachment)
        else:
            paths = [p.id for p in model.flow_paths if s.attachment in (p.source, p.sink)]
        for pid in paths:
            for a in model.path(pid).elements:
                if g.has_edge(a, s.id):
                    continue
                g.add_edge(a, s.id, kind=PHYSICAL_EDGE)
    return g


def _physically_affected(g: nx.DiGraph, actuator: str) -> Set[str]:
    return {s for s in g.successors(actuator) if g.edges[actuator, s]["kind"] == PHYSICAL_EDGE}


def _touch(g: nx.DiGraph, model: PlantModel) -> Dict[str, Set[str]]:
    """Components each statement reads, writes, or physically moves."""
    out: Dict[str, Set[str]] = {}
    for c in model.control_statements:
        comps = set(c.sensors) | set(c.actuators)
        for a in c.actuators:
            comps |= _physically_affected(g, a)
        out[c.id] = comps
    return out


def relevant_statements(model: PlantModel, intent: ThreatIntent) -> List[str]:
    """Fixpoint closure of statements connected to the metric sensors, in declaration order."""
    intent.check(model)
    g = dependency_graph(model)
    touch = _touch(g, model)
    frontier: Set[str] = set(intent.metric_sensors)
    chosen: Set[str] = set()
    changed = True
    while changed:
        changed = False
        for c in model.control_statements:
            if c.id not in chosen and touch[c.id] & frontier:
                chosen.add(c.id)
                frontier |= touch[c.id]
                changed = True
    return [c.id for c in model.control_statements if c.id in chosen]


def reachable(model: PlantModel, capability: ThreatCapability) -> Set[str]:
    """Attacker-controlled components plus everything they influence."""
    g = dependency_graph(model)
    out: Set[str] = set(capability.components)
    for comp in capability.components:
        out |= nx.descendants(g, comp)
    return out


def slice_model(model: PlantModel, intent: ThreatIntent, capability: ThreatCapability) -> ModelSlice:
    intent.check(model)
    capability.check(model)
    g = dependency_graph(model)
    touch = _touch(g, model)
    relevant = relevant_statements(model, intent)
    actuator_ids = set(model.element_by_id)

    s_rel: Set[str] = set()
    a_rel: Set[str] = set()
    for cid in relevant:
        a_rel |= set(model.statement_by_id[cid].actuators)
        s_rel |= touch[cid] - actuator_ids

    reach = reachable(model, capability)
    s_model = s_rel & reach
    a_model = a_rel & reach
    keep = s_model | a_model
    # a statement counts as referencing the sensors its actuators physically move
    cs_model = [cid for cid in relevant if touch[cid] & keep]
    return ModelSlice(
        sensors=tuple(ordered(s_model, [s.id for s in model.sensors])),
        actuators=tuple(ordered(a_model, [e.id for e in model.flow_elements])),
        control_statements=tuple(cs_model),
    )


# public name mirrors the operation; ``slice`` shadows the builtin only inside this module's namespace
slice = slice_model  # noqa: A001


def restrict_model(model: PlantModel, model_slice: ModelSlice) -> PlantModel:
    """The plant with its control logic reduced to the slice's statements."""
    keep = set(model_slice.control_statements)
    return replace(model, control_statements=tuple(c for c in model.control_statements if c.id in keep))


def threat_from_dict(data: Mapping[str, Any]) -> Tuple[ThreatIntent, ThreatCapability]:
    try:
        intent = ThreatIntent(data["intent"]["metric_sensors"])
        cap = data.get("capability", {})
        capability = ThreatCapability(cap.get("sensors", ()), cap.get("actuators", ()))
    except (KeyError, TypeError) as exc:
        raise ContractViolation(f"threat file: missing or malformed field {exc}") from None
    return intent, capability


def load_threat(path: Union[str, Path]) -> Tuple[ThreatIntent, ThreatCapability]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ContractViolation(f"cannot read threat file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"threat file {path}: invalid JSON ({exc.msg})") from None
    return threat_from_dict(data)
