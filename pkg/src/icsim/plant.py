"""Static plant description: tanks, flow elements, sensors, piping and control logic.

A :class:`PlantModel` is immutable once built. It is normally loaded from a JSON
configuration file (see ``docs/plant-config.md``) with :func:`load_plant`.

Units are fixed throughout the package: levels in mm, flows in m³/hr,
cross-section areas in m², time in seconds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import ContractViolation

EXTERNAL_SUPPLY = "external-supply"
EXTERNAL_DISCHARGE = "external-discharge"

PUMP = "pump"
VALVE = "valve"
DEFAULT_LABELS = {PUMP: ("on", "off"), VALVE: ("open", "closed")}

LEVEL = "level"
FLOW = "flow"

GE = ">="
LE = "<="


@dataclass(frozen=True)
class Tank:
    id: str
    cross_section_area: float  # m²
    physical_height: float  # mm
    overflow_level: float  # mm
    underflow_level: float  # mm
    initial_level: float = 0.0  # mm


@dataclass(frozen=True)
class FlowElement:
    id: str
    kind: str  # "pump" | "valve"
    design_flow_rate: float  # m³/hr
    state_labels: Tuple[str, str] = ()  # (enabled, disabled)
    initial_state: Optional[str] = None

    def __post_init__(self):
        if not self.state_labels and self.kind in DEFAULT_LABELS:
            object.__setattr__(self, "state_labels", DEFAULT_LABELS[self.kind])
        if self.initial_state is None and len(self.state_labels) == 2:
            object.__setattr__(self, "initial_state", self.state_labels[1])

    @property
    def enabled_label(self) -> str:
        return self.state_labels[0]

    @property
    def disabled_label(self) -> str:
        return self.state_labels[1]

    def is_enabled(self, label: Union[str, bool]) -> bool:
        if isinstance(label, bool):
            return label
        if label == self.state_labels[0]:
            return True
        if label == self.state_labels[1]:
            return False
        raise ContractViolation(
            f"{self.id}: unknown state {label!r} (expected one of {list(self.state_labels)})"
        )

    def label(self, enabled: bool) -> str:
        return self.state_labels[0] if enabled else self.state_labels[1]


@dataclass(frozen=True)
class Sensor:
    id: str
    kind: str  # "level" | "flow"
    attachment: str  # tank id for level sensors, flow path id for flow sensors

    @property
    def unit(self) -> str:
        return "mm" if self.kind == LEVEL else "m3/hr"


@dataclass(frozen=True)
class FlowPath:
    """Piping from a source to a sink through an ordered run of flow elements.

    ``source`` is ``external-supply``, a tank id, or the id of another flow path
    whose delivered flow feeds this one (a tankless pass-through stage).
    """

    id: str
    source: str
    sink: str
    elements: Tuple[str, ...]
    yield_fraction: float = 1.0


@dataclass(frozen=True)
class Predicate:
    sensor: str
    comparator: str  # ">=" | "<="
    threshold: float
    threshold_ref: Optional[str] = None

    def holds(self, value: float) -> bool:
        if self.comparator == GE:
            return value >= self.threshold
        return value <= self.threshold


@dataclass(frozen=True)
class ControlStatement:
    id: str
    condition: Tuple[Predicate, ...]
    actions: Tuple[Tuple[str, str], ...]  # (actuator id, target state label)

    @property
    def sensors(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(p.sensor for p in self.condition))

    @property
    def actuators(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(a for a, _ in self.actions))


@dataclass(frozen=True)
class PlantModel:
    name: str
    tanks: Tuple[Tank, ...] = ()
    flow_elements: Tuple[FlowElement, ...] = ()
    sensors: Tuple[Sensor, ...] = ()
    flow_paths: Tuple[FlowPath, ...] = ()
    control_statements: Tuple[ControlStatement, ...] = ()
    thresholds: Mapping[str, float] = field(default_factory=dict)
    # process label -> raw critical-state predicate specs (see metrics.process_specs)
    processes: Mapping[str, Tuple[Mapping[str, Any], ...]] = field(default_factory=dict)

    @cached_property
    def tank_by_id(self) -> Dict[str, Tank]:
        return {t.id: t for t in self.tanks}

    @cached_property
    def element_by_id(self) -> Dict[str, FlowElement]:
        return {e.id: e for e in self.flow_elements}

    @cached_property
    def sensor_by_id(self) -> Dict[str, Sensor]:
        return {s.id: s for s in self.sensors}

    @cached_property
    def path_by_id(self) -> Dict[str, FlowPath]:
        return {p.id: p for p in self.flow_paths}

    @cached_property
    def statement_by_id(self) -> Dict[str, ControlStatement]:
        return {c.id: c for c in self.control_statements}

    @cached_property
    def path_of_element(self) -> Dict[str, str]:
        out: Dict[str, str] = {}
        for p in self.flow_paths:
            for e in p.elements:
                out.setdefault(e, p.id)
        return out

    def tank(self, tank_id: str) -> Tank:
        try:
            return self.tank_by_id[tank_id]
        except KeyError:
            raise ContractViolation(f"unknown tank {tank_id!r}") from None

    def element(self, element_id: str) -> FlowElement:
        try:
            return self.element_by_id[element_id]
        except KeyError:
            raise ContractViolation(f"unknown actuator {element_id!r}") from None

    def sensor(self, sensor_id: str) -> Sensor:
        try:
            return self.sensor_by_id[sensor_id]
        except KeyError:
            raise ContractViolation(f"unknown sensor {sensor_id!r}") from None

    def path(self, path_id: str) -> FlowPath:
        try:
            return self.path_by_id[path_id]
        except KeyError:
            raise ContractViolation(f"unknown flow path {path_id!r}") from None

    def level_sensor_of(self, tank_id: str) -> Optional[str]:
        for s in self.sensors:
            if s.kind == LEVEL and s.attachment == tank_id:
                return s.id
        return None

    def sensor_thresholds(self, sensor_id: str) -> Dict[str, float]:
        """Named thresholds of one sensor, keyed by the suffix after ``SENSOR.``."""
        prefix = sensor_id + "."
        return {k[len(prefix):]: v for k, v in self.thresholds.items() if k.startswith(prefix)}

    def upstream_paths(self, path_id: str) -> List[str]:
        """The path itself followed by every path feeding it through pass-through sources."""
        chain = [path_id]
        seen = {path_id}
        src = self.path(path_id).source
        while src in self.path_by_id and src not in seen:
            chain.append(src)
            seen.add(src)
            src = self.path_by_id[src].source
        return chain

    def path_order(self) -> List[str]:
        """Flow paths ordered so every pass-through source precedes its consumers."""
        order: List[str] = []
        placed = set()
        pending = [p.id for p in self.flow_paths]
        while pending:
            progressed = False
            for pid in list(pending):
                src = self.path_by_id[pid].source
                if src not in self.path_by_id or src in placed:
                    order.append(pid)
                    placed.add(pid)
                    pending.remove(pid)
                    progressed = True
            if not progressed:
                raise ContractViolation(f"cyclic pass-through flow paths: {pending}")
        return order


def validate_plant(model: PlantModel) -> List[str]:
    """Return a description of every violated structural invariant; empty means valid."""
    problems: List[str] = []
    seen: Dict[str, str] = {}
    groups = (
        ("tank", model.tanks),
        ("flow element", model.flow_elements),
        ("sensor", model.sensors),
        ("flow path", model.flow_paths),
        ("control statement", model.control_statements),
    )
    for kind, items in groups:
        for item in items:
            if not item.id:
                problems.append(f"{kind} with empty id")
            elif item.id in seen:
                problems.append(f"duplicate id {item.id!r} ({seen[item.id]} and {kind})")
            else:
                seen[item.id] = kind

    for t in model.tanks:
        if not t.cross_section_area > 0:
            problems.append(f"tank {t.id}: cross_section_area must be > 0")
        if not (0 <= t.underflow_level < t.overflow_level <= t.physical_height):
            problems.append(
                f"tank {t.id}: requires 0 <= underflow_level < overflow_level <= physical_height"
            )
        if not (0 <= t.initial_level <= t.physical_height):
            problems.append(f"tank {t.id}: initial_level outside [0, physical_height]")

    for e in model.flow_elements:
        if e.kind not in (PUMP, VALVE):
            problems.append(f"flow element {e.id}: kind must be pump or valve, got {e.kind!r}")
        if not e.design_flow_rate > 0:
            problems.append(f"flow element {e.id}: design_flow_rate must be > 0")
        if len(e.state_labels) != 2 or e.state_labels[0] == e.state_labels[1]:
            problems.append(f"flow element {e.id}: needs two distinct state labels")
        elif e.initial_state not in e.state_labels:
            problems.append(f"flow element {e.id}: initial_state {e.initial_state!r} is not a state label")

    for s in model.sensors:
        if s.kind == LEVEL:
            if s.attachment not in model.tank_by_id:
                problems.append(f"sensor {s.id}: level sensor attached to unknown tank {s.attachment!r}")
        elif s.kind == FLOW:
            if s.attachment not in model.path_by_id:
                problems.append(f"sensor {s.id}: flow sensor attached to unknown flow path {s.attachment!r}")
        else:
            problems.append(f"sensor {s.id}: kind must be level or flow, got {s.kind!r}")

    owner: Dict[str, str] = {}
    for p in model.flow_paths:
        if not p.elements:
            problems.append(f"flow path {p.id}: no elements")
        for e in p.elements:
            if e not in model.element_by_id:
                problems.append(f"flow path {p.id}: unknown flow element {e!r}")
            elif e in owner and owner[e] != p.id:
                problems.append(f"flow element {e} appears on paths {owner[e]} and {p.id}")
            else:
                owner[e] = p.id
        valid_sources = {EXTERNAL_SUPPLY} | set(model.tank_by_id) | (set(model.path_by_id) - {p.id})
        if p.source not in valid_sources:
            problems.append(f"flow path {p.id}: unknown source {p.source!r}")
        if p.sink != EXTERNAL_DISCHARGE and p.sink not in model.tank_by_id:
            problems.append(f"flow path {p.id}: unknown sink {p.sink!r}")
        if p.source == p.sink:
            problems.append(f"flow path {p.id}: source equals sink")
        if not (0 < p.yield_fraction <= 1):
            problems.append(f"flow path {p.id}: yield_fraction must lie in (0, 1]")
    try:
        model.path_order()
    except ContractViolation as exc:
        problems.append(str(exc))

    for c in model.control_statements:
        if not c.condition:
            problems.append(f"control statement {c.id}: empty condition")
        if not c.actions:
            problems.append(f"control statement {c.id}: no actions")
        for pred in c.condition:
            if pred.sensor not in model.sensor_by_id:
                problems.append(f"control statement {c.id}: unknown sensor {pred.sensor}")
            if pred.comparator not in (GE, LE):
                problems.append(f"control statement {c.id}: comparator must be >= or <=")
        for act, label in c.actions:
            el = model.element_by_id.get(act)
            if el is None:
                problems.append(f"control statement {c.id}: actuator {act} is not a flow element")
            elif label not in el.state_labels:
                problems.append(f"control statement {c.id}: {act} has no state {label!r}")

    for key in model.thresholds:
        sensor_id, _, name = key.rpartition(".")
        if not name or sensor_id not in model.sensor_by_id:
            problems.append(f"threshold {key!r}: must be named SENSOR.NAME for a known sensor")

    for label, preds in model.processes.items():
        for pred in preds:
            ref = pred.get("tank") or pred.get("sensor")
            if ref not in model.tank_by_id and ref not in model.sensor_by_id:
                problems.append(f"process {label}: unknown component {ref!r}")
    return problems


def check_plant(model: PlantModel) -> PlantModel:
    problems = validate_plant(model)
    if problems:
        raise ContractViolation(f"invalid plant {model.name!r}: " + "; ".join(problems))
    return model


def path_design_rate(model: PlantModel, path: FlowPath) -> float:
    """Rate-limiting design flow of a path: the smallest element rate."""
    return min(model.element(e).design_flow_rate for e in path.elements)


def resolve_path_flow(
    model: PlantModel,
    path: FlowPath,
    actuator_states: Mapping[str, Union[str, bool]],
    source_level: Optional[float] = None,
) -> Tuple[float, Optional[Tuple[str, str]]]:
    """Delivered flow of one path and an optional ``("dry_run", pump)`` event.

    ``source_level`` is the source tank level in mm, ``None`` for an external
    supply, or the upstream delivered flow (m³/hr) for a pass-through source.
    """
    enabled = []
    for e in path.elements:
        if e not in actuator_states:
            raise ContractViolation(f"flow path {path.id}: no state given for {e}")
        enabled.append(model.element(e).is_enabled(actuator_states[e]))
    for a in actuator_states:
        if a not in model.element_by_id:
            raise ContractViolation(f"unknown actuator {a!r}")

    rate = path_design_rate(model, path)
    if path.source == EXTERNAL_SUPPLY or source_level is None:
        has_supply = True
    else:
        has_supply = source_level > 0
        if path.source in model.path_by_id:
            rate = min(rate, source_level)

    event = None
    if not has_supply:
        for e, on in zip(path.elements, enabled):
            if on and model.element(e).kind == PUMP:
                event = ("dry_run", e)
                break
    if all(enabled) and has_supply:
        return rate * path.yield_fraction, event
    return 0.0, event


# --------------------------------------------------------------------------- config I/O


def _threshold(value: Any, table: Mapping[str, float], where: str) -> Tuple[float, Optional[str]]:
    if isinstance(value, str):
        if value not in table:
            raise ContractViolation(f"{where}: unknown named threshold {value!r}")
        return float(table[value]), value
    return float(value), None


def plant_from_dict(data: Mapping[str, Any], validate: bool = True) -> PlantModel:
    """Build a plant from its configuration mapping."""
    try:
        thresholds = {str(k): float(v) for k, v in data.get("thresholds", {}).items()}
        tanks = tuple(
            Tank(
                id=t["id"],
                cross_section_area=float(t["cross_section_area"]),
                physical_height=float(t["physical_height"]),
                overflow_level=float(t["overflow_level"]),
                underflow_level=float(t.get("underflow_level", 0.0)),
                initial_level=float(t.get("initial_level", 0.0)),
            )
            for t in data.get("tanks", [])
        )
        elements = tuple(
            FlowElement(
                id=e["id"],
                kind=e["kind"],
                design_flow_rate=float(e["design_flow_rate"]),
                state_labels=tuple(e.get("state_labels", ())),
                initial_state=e.get("initial_state"),
            )
            for e in data.get("flow_elements", [])
        )
        sensors = tuple(
            Sensor(id=s["id"], kind=s["kind"], attachment=s["attachment"])
            for s in data.get("sensors", [])
        )
        paths = tuple(
            FlowPath(
                id=p["id"],
                source=p["source"],
                sink=p["sink"],
                elements=tuple(p["elements"]),
                yield_fraction=float(p.get("yield_fraction", 1.0)),
            )
            for p in data.get("flow_paths", [])
        )
        statements = []
        for c in data.get("control_statements", []):
            preds = []
            for cond in c["condition"]:
                value, ref = _threshold(cond["threshold"], thresholds, f"control statement {c['id']}")
                preds.append(Predicate(cond["sensor"], cond["comparator"], value, ref))
            actions = tuple((a["actuator"], a["state"]) for a in c["actions"])
            statements.append(ControlStatement(c["id"], tuple(preds), actions))
        processes = {
            str(label): tuple(dict(p) for p in preds)
            for label, preds in data.get("processes", {}).items()
        }
    except KeyError as exc:
        raise ContractViolation(f"plant config: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ContractViolation):
            raise
        raise ContractViolation(f"plant config: {exc}") from None

    model = PlantModel(
        name=str(data.get("name", "plant")),
        tanks=tanks,
        flow_elements=elements,
        sensors=sensors,
        flow_paths=paths,
        control_statements=tuple(statements),
        thresholds=thresholds,
        processes=processes,
    )
    return check_plant(model) if validate else model


def plant_to_dict(model: PlantModel) -> Dict[str, Any]:
    def threshold_out(p: Predicate):
        return p.threshold_ref if p.threshold_ref is not None else p.threshold

    return {
        "name": model.name,
        "tanks": [
            {
                "id": t.id,
                "cross_section_area": t.cross_section_area,
                "physical_height": t.physical_height,
                "overflow_level": t.overflow_level,
                "underflow_level": t.underflow_level,
                "initial_level": t.initial_level,
            }
            for t in model.tanks
        ],
        "flow_elements": [
            {
                "id": e.id,
                "kind": e.kind,
                "design_flow_rate": e.design_flow_rate,
                "state_labels": list(e.state_labels),
                "initial_state": e.initial_state,
            }
            for e in model.flow_elements
        ],
        "sensors": [{"id": s.id, "kind": s.kind, "attachment": s.attachment} for s in model.sensors],
        "flow_paths": [
            {
                "id": p.id,
                "source": p.source,
                "sink": p.sink,
                "elements": list(p.elements),
                "yield_fraction": p.yield_fraction,
            }
            for p in model.flow_paths
        ],
        "control_statements": [
            {
                "id": c.id,
                "condition": [
                    {"sensor": p.sensor, "comparator": p.comparator, "threshold": threshold_out(p)}
                    for p in c.condition
                ],
                "actions": [{"actuator": a, "state": s} for a, s in c.actions],
            }
            for c in model.control_statements
        ],
        "thresholds": dict(model.thresholds),
        "processes": {k: [dict(p) for p in v] for k, v in model.processes.items()},
    }


def load_plant(path: Union[str, Path]) -> PlantModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ContractViolation(f"cannot read plant file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"plant file {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return plant_from_dict(data)


def save_plant(model: PlantModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(plant_to_dict(model), indent=2) + "\n")


def all_sensor_ids(model: PlantModel, kind: Optional[str] = None) -> List[str]:
    return [s.id for s in model.sensors if kind is None or s.kind == kind]


def require_known(model: PlantModel, sensors: Iterable[str] = (), actuators: Iterable[str] = ()) -> None:
    bad = [s for s in sensors if s not in model.sensor_by_id]
    bad += [a for a in actuators if a not in model.element_by_id]
    if bad:
        raise ContractViolation("unknown component(s): " + ", ".join(sorted(bad)))


def ordered(ids: Iterable[str], universe: Sequence[str]) -> List[str]:
    """``ids`` sorted by their position in ``universe`` (declaration order)."""
    pos = {x: i for i, x in enumerate(universe)}
    return sorted(set(ids), key=lambda x: (pos.get(x, len(pos)), x))
