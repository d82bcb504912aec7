"""Discrete-time simulation of the dual cyber/physical plant state.

Every tick runs the same fixed sequence: controllers read the cyber realm (physical
readings overwritten by active sensor spoofs), control statements fire in
declaration order with last-writer-wins, command spoofs override the commanded
states, actuators switch instantly, path flows are resolved and tanks integrated
with clamping, and physical sensors plus safety events are updated.

The kernel is vectorised over a batch of attack scenarios sharing one initial
state. All arithmetic is elementwise per batch row, so a scenario simulated alone
produces bit-identical results to the same scenario inside a larger batch.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolation
from .plant import (
    EXTERNAL_SUPPLY,
    FLOW,
    GE,
    LEVEL,
    PUMP,
    PlantModel,
    path_design_rate,
    resolve_path_flow,
)

SENSOR_SPOOF = "sensor_spoof"
COMMAND_SPOOF = "actuator_command_spoof"

OVERFLOW = "overflow"
UNDERFLOW = "underflow"
DRY_RUN = "dry_run"


class Event(NamedTuple):
    time: float
    kind: str
    component: str


@dataclass
class DualState:
    """Paired physical and cyber snapshots of the plant at one instant."""

    physical_sensors: Dict[str, float]
    cyber_sensors: Dict[str, float]
    actuator_states: Dict[str, str]
    commanded_states: Dict[str, str]
    tank_levels: Dict[str, float]
    time: float = 0.0

    def copy(self, **changes) -> "DualState":
        base = DualState(
            dict(self.physical_sensors),
            dict(self.cyber_sensors),
            dict(self.actuator_states),
            dict(self.commanded_states),
            dict(self.tank_levels),
            self.time,
        )
        return replace(base, **changes) if changes else base


@dataclass(frozen=True)
class AttackPrimitive:
    """A constant sensor spoof or forced actuator command over ``[start, end)``.

    ``value`` is a number or a named threshold (``"LIT-301.HH"``) for sensor
    spoofs, and a state label for command spoofs.
    """

    kind: str
    target: str
    value: Union[float, str]
    start: float
    end: float

    def active(self, t: float) -> bool:
        return self.start <= t < self.end

    def shifted(self, offset: float) -> "AttackPrimitive":
        return replace(self, start=self.start + offset, end=self.end + offset)

    def resolved_value(self, model: PlantModel) -> Union[float, str]:
        if self.kind == SENSOR_SPOOF and isinstance(self.value, str):
            try:
                return float(model.thresholds[self.value])
            except KeyError:
                raise ContractViolation(f"unknown named threshold {self.value!r}") from None
        return self.value


@dataclass(frozen=True)
class AttackScenario:
    name: str
    primitives: Tuple[AttackPrimitive, ...] = ()
    description: str = ""
    reference_tank: Optional[str] = None

    @property
    def window(self) -> Optional[Tuple[float, float]]:
        if not self.primitives:
            return None
        return min(p.start for p in self.primitives), max(p.end for p in self.primitives)

    def shifted(self, offset: float) -> "AttackScenario":
        return replace(self, primitives=tuple(p.shifted(offset) for p in self.primitives))


NO_ATTACK = AttackScenario("normal")


def validate_scenario(model: PlantModel, scenario: AttackScenario) -> List[str]:
    problems: List[str] = []
    for i, p in enumerate(scenario.primitives):
        where = f"{scenario.name}[{i}] {p.target}"
        if not p.start < p.end:
            problems.append(f"{where}: window start must precede end")
        if p.kind == SENSOR_SPOOF:
            sensor = model.sensor_by_id.get(p.target)
            if sensor is None:
                problems.append(f"{where}: unknown sensor")
                continue
            try:
                value = float(p.resolved_value(model))
            except (ContractViolation, TypeError, ValueError) as exc:
                problems.append(f"{where}: {exc}")
                continue
            upper = math.inf
            if sensor.kind == LEVEL:
                upper = model.tank(sensor.attachment).physical_height
            if not (0 <= value <= upper) or math.isnan(value):
                problems.append(f"{where}: spoof value {value} outside sensor range [0, {upper}]")
        elif p.kind == COMMAND_SPOOF:
            el = model.element_by_id.get(p.target)
            if el is None:
                problems.append(f"{where}: unknown actuator")
            elif p.value not in el.state_labels:
                problems.append(f"{where}: {p.value!r} is not a state of {p.target}")
        else:
            problems.append(f"{where}: unknown primitive kind {p.kind!r}")
    by_target: Dict[str, List[AttackPrimitive]] = {}
    for p in scenario.primitives:
        by_target.setdefault(p.target, []).append(p)
    for target, prims in by_target.items():
        prims = sorted(prims, key=lambda q: q.start)
        for a, b in zip(prims, prims[1:]):
            if b.start < a.end:
                problems.append(f"{scenario.name}: overlapping primitives on {target}")
    return problems


def check_scenario(model: PlantModel, scenario: AttackScenario) -> None:
    problems = validate_scenario(model, scenario)
    if problems:
        raise ContractViolation("; ".join(problems))


def scenario_from_dict(data: Mapping[str, Any]) -> AttackScenario:
    try:
        prims = []
        for p in data.get("primitives", []):
            value = p["value"]
            if p["kind"] == SENSOR_SPOOF and not isinstance(value, str):
                value = float(value)
            prims.append(AttackPrimitive(p["kind"], p["target"], value, float(p["start"]), float(p["end"])))
        return AttackScenario(
            name=str(data["name"]),
            primitives=tuple(prims),
            description=str(data.get("description", "")),
            reference_tank=data.get("reference_tank"),
        )
    except KeyError as exc:
        raise ContractViolation(f"scenario: missing field {exc.args[0]!r}") from None


def scenario_to_dict(scenario: AttackScenario) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "name": scenario.name,
        "primitives": [
            {"kind": p.kind, "target": p.target, "value": p.value, "start": p.start, "end": p.end}
            for p in scenario.primitives
        ],
    }
    if scenario.description:
        out["description"] = scenario.description
    if scenario.reference_tank:
        out["reference_tank"] = scenario.reference_tank
    return out


# --------------------------------------------------------------------------- compiled model


class _Path(NamedTuple):
    elements: np.ndarray
    rate: float
    yield_fraction: float
    source_tank: int  # -1 if not a tank
    source_path: int  # -1 if not a pass-through
    sink_tank: int  # -1 for external discharge
    pumps: Tuple[int, ...]


class _Compiled:
    def __init__(self, model: PlantModel):
        self.model = model
        self.sensor_ids = tuple(s.id for s in model.sensors)
        self.tank_ids = tuple(t.id for t in model.tanks)
        self.act_ids = tuple(e.id for e in model.flow_elements)
        self.path_ids = tuple(model.path_order())
        s_ix = {s: i for i, s in enumerate(self.sensor_ids)}
        t_ix = {t: i for i, t in enumerate(self.tank_ids)}
        a_ix = {a: i for i, a in enumerate(self.act_ids)}
        p_ix = {p: i for i, p in enumerate(self.path_ids)}
        self.s_ix, self.t_ix, self.a_ix, self.p_ix = s_ix, t_ix, a_ix, p_ix

        tanks = model.tanks
        self.area = np.array([t.cross_section_area for t in tanks], dtype=float)
        self.height = np.array([t.physical_height for t in tanks], dtype=float)
        self.overflow = np.array([t.overflow_level for t in tanks], dtype=float)
        self.underflow = np.array([t.underflow_level for t in tanks], dtype=float)

        self.level_s = np.array([s_ix[s.id] for s in model.sensors if s.kind == LEVEL], dtype=int)
        self.level_t = np.array([t_ix[s.attachment] for s in model.sensors if s.kind == LEVEL], dtype=int)
        self.flow_s = np.array([s_ix[s.id] for s in model.sensors if s.kind == FLOW], dtype=int)
        self.flow_p = np.array([p_ix[s.attachment] for s in model.sensors if s.kind == FLOW], dtype=int)

        self.paths: List[_Path] = []
        for pid in self.path_ids:
            p = model.path(pid)
            self.paths.append(
                _Path(
                    elements=np.array([a_ix[e] for e in p.elements], dtype=int),
                    rate=path_design_rate(model, p),
                    yield_fraction=p.yield_fraction,
                    source_tank=t_ix.get(p.source, -1),
                    source_path=p_ix.get(p.source, -1),
                    sink_tank=t_ix.get(p.sink, -1),
                    pumps=tuple(a_ix[e] for e in p.elements if model.element(e).kind == PUMP),
                )
            )

        cond_s, cond_ge, cond_th, starts = [], [], [], []
        act_stmt, act_a, act_val = [], [], []
        for j, c in enumerate(model.control_statements):
            starts.append(len(cond_s))
            for pred in c.condition:
                cond_s.append(s_ix[pred.sensor])
                cond_ge.append(pred.comparator == GE)
                cond_th.append(pred.threshold)
            for a, label in c.actions:
                act_stmt.append(j)
                act_a.append(a_ix[a])
                act_val.append(model.element(a).is_enabled(label))
        self.n_statements = len(model.control_statements)
        self.cond_s = np.array(cond_s, dtype=int)
        self.cond_ge = np.array(cond_ge, dtype=bool)
        self.cond_th = np.array(cond_th, dtype=float)
        self.cond_starts = np.array(starts, dtype=int)
        self.actions = list(zip(act_stmt, act_a, act_val))

        self.labels = {e.id: tuple(e.state_labels) for e in model.flow_elements}

    # state conversion -----------------------------------------------------------------
    def encode(self, state: DualState) -> Tuple[np.ndarray, ...]:
        model = self.model
        try:
            levels = np.array([float(state.tank_levels[t]) for t in self.tank_ids])
            phys = np.array([float(state.physical_sensors[s]) for s in self.sensor_ids])
            cyber = np.array([float(state.cyber_sensors.get(s, state.physical_sensors[s])) for s in self.sensor_ids])
            actual = np.array([model.element(a).is_enabled(state.actuator_states[a]) for a in self.act_ids], dtype=bool)
            commanded = np.array(
                [model.element(a).is_enabled(state.commanded_states.get(a, state.actuator_states[a])) for a in self.act_ids],
                dtype=bool,
            )
        except KeyError as exc:
            raise ContractViolation(f"state is missing a value for {exc.args[0]!r}") from None
        return levels, phys, cyber, actual, commanded

    def decode(self, levels, phys, cyber, actual, commanded, time: float) -> DualState:
        return DualState(
            physical_sensors={s: float(phys[i]) for i, s in enumerate(self.sensor_ids)},
            cyber_sensors={s: float(cyber[i]) for i, s in enumerate(self.sensor_ids)},
            actuator_states={a: self.labels[a][0 if actual[i] else 1] for i, a in enumerate(self.act_ids)},
            commanded_states={a: self.labels[a][0 if commanded[i] else 1] for i, a in enumerate(self.act_ids)},
            tank_levels={t: float(levels[i]) for i, t in enumerate(self.tank_ids)},
            time=float(time),
        )


class BatchSimulator:
    """Advances one initial state under several attack scenarios in lock-step."""

    def __init__(self, model: PlantModel, initial: DualState, scenarios: Sequence[AttackScenario], dt: float = 1.0):
        if not dt > 0:
            raise ContractViolation(f"dt must be > 0, got {dt}")
        for sc in scenarios:
            check_scenario(model, sc)
        self.model = model
        self.dt = float(dt)
        self.scenarios = list(scenarios)
        c = self.c = _Compiled(model)
        B = self.B = len(self.scenarios)
        levels, phys, cyber, actual, commanded = c.encode(initial)
        self.t0 = float(initial.time)
        self.k = 0
        self.levels = np.tile(levels, (B, 1))
        self.phys = np.tile(phys, (B, 1))
        self.actual = np.tile(actual, (B, 1))
        self.commanded = np.tile(commanded, (B, 1))
        self.flows = np.zeros((B, len(c.path_ids)))
        self.level_k = (self.dt * 1000.0 / 3600.0) / c.area

        self._over = self.levels >= c.overflow
        self._under = self.levels <= c.underflow
        self._dry = np.zeros((B, len(c.act_ids)), dtype=bool)

        sb, ss, sv, s0, s1 = [], [], [], [], []
        cb, ca, cv, c0, c1 = [], [], [], [], []
        for b, sc in enumerate(self.scenarios):
            for p in sc.primitives:
                if p.kind == SENSOR_SPOOF:
                    sb.append(b)
                    ss.append(c.s_ix[p.target])
                    sv.append(float(p.resolved_value(model)))
                    s0.append(p.start)
                    s1.append(p.end)
                else:
                    cb.append(b)
                    ca.append(c.a_ix[p.target])
                    cv.append(model.element(p.target).is_enabled(p.value))
                    c0.append(p.start)
                    c1.append(p.end)
        self._sp = (np.array(sb, int), np.array(ss, int), np.array(sv, float), np.array(s0, float), np.array(s1, float))
        self._cp = (np.array(cb, int), np.array(ca, int), np.array(cv, bool), np.array(c0, float), np.array(c1, float))
        self.cyber = self.cyber_view(self.phys, self.t0)
        if not len(sb):
            # keep the supplied cyber snapshot when nothing is spoofed at t0 and it differs
            self.cyber = np.tile(cyber, (B, 1)) if not np.array_equal(cyber, phys) else self.cyber

    @property
    def time(self) -> float:
        return self.t0 + self.k * self.dt

    def cyber_view(self, phys: np.ndarray, t: float) -> np.ndarray:
        cyber = phys.copy()
        b, s, v, start, end = self._sp
        if len(b):
            m = (start <= t) & (t < end)
            if m.any():
                cyber[b[m], s[m]] = v[m]
        return cyber

    def advance(self) -> List[Tuple[int, Event]]:
        """Run one tick; return ``(batch row, event)`` pairs raised during it."""
        c = self.c
        t = self.time
        t_next = self.t0 + (self.k + 1) * self.dt

        # (1) controllers read the cyber realm
        cyber = self.cyber_view(self.phys, t)

        # (2) control statements in declaration order, last writer wins, otherwise latch
        cmd = self.commanded.copy()
        if c.n_statements:
            vals = cyber[:, c.cond_s]
            res = np.where(c.cond_ge, vals >= c.cond_th, vals <= c.cond_th)
            fire = np.logical_and.reduceat(res, c.cond_starts, axis=1)
            for j, a, v in c.actions:
                f = fire[:, j]
                cmd[:, a] = np.where(f, v, cmd[:, a])

        # (3) command spoofs override, (4) instantaneous actuation
        b, a, v, start, end = self._cp
        if len(b):
            m = (start <= t) & (t < end)
            if m.any():
                cmd[b[m], a[m]] = v[m]
        actual = cmd.copy()

        # (5) path flows and tank integration
        B = self.B
        flows = np.zeros((B, len(c.paths)))
        dry = np.zeros_like(self._dry)
        net = np.zeros_like(self.levels)
        for i, p in enumerate(c.paths):
            enabled = actual[:, p.elements].all(axis=1)
            rate: Union[float, np.ndarray] = p.rate
            if p.source_tank >= 0:
                supply = self.levels[:, p.source_tank] > 0
            elif p.source_path >= 0:
                upstream = flows[:, p.source_path]
                supply = upstream > 0
                rate = np.minimum(p.rate, upstream)
            else:
                supply = np.ones(B, dtype=bool)
            feed = np.where(enabled & supply, rate, 0.0)
            flows[:, i] = feed * p.yield_fraction
            if p.source_tank >= 0:
                net[:, p.source_tank] -= feed
            if p.sink_tank >= 0:
                net[:, p.sink_tank] += flows[:, i]
            for pump in p.pumps:
                dry[:, pump] |= actual[:, pump] & ~supply
        levels = np.clip(self.levels + net * self.level_k, 0.0, c.height)

        # (6) physical sensors
        phys = self.phys.copy()
        phys[:, c.level_s] = levels[:, c.level_t]
        phys[:, c.flow_s] = flows[:, c.flow_p]

        # (7) safety events on rising edges
        events: List[Tuple[int, Event]] = []
        over = levels >= c.overflow
        under = levels <= c.underflow
        for kind, now, before, names in (
            (OVERFLOW, over, self._over, c.tank_ids),
            (UNDERFLOW, under, self._under, c.tank_ids),
            (DRY_RUN, dry, self._dry, c.act_ids),
        ):
            edge = now & ~before
            if edge.any():
                for row, col in zip(*np.nonzero(edge)):
                    events.append((int(row), Event(t_next, kind, names[col])))

        # (8) commit and advance time
        self.levels, self.phys, self.flows = levels, phys, flows
        self.actual, self.commanded = actual, cmd
        self._over, self._under, self._dry = over, under, dry
        self.k += 1
        self.cyber = self.cyber_view(phys, t_next)
        return events

    def state(self, row: int = 0) -> DualState:
        return self.c.decode(
            self.levels[row], self.phys[row], self.cyber[row], self.actual[row], self.commanded[row], self.time
        )


# --------------------------------------------------------------------------- traces


@dataclass
class SimulationTrace:
    """Uniformly sampled dual state of one run plus its safety events.

    Sample ``k`` is the state at ``times[k]``; flows and actuator states recorded
    there are the ones that applied over the preceding tick.
    """

    dt: float
    times: np.ndarray
    sensor_ids: Tuple[str, ...]
    tank_ids: Tuple[str, ...]
    actuator_ids: Tuple[str, ...]
    physical: np.ndarray
    cyber: np.ndarray
    levels: np.ndarray
    actuators: np.ndarray
    commanded: np.ndarray
    state_labels: Dict[str, Tuple[str, str]]
    tank_limits: Dict[str, Tuple[float, float]]
    events: List[Event] = field(default_factory=list)
    scenario: str = ""
    flow_sensor_ids: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def index_at(self, t: float) -> int:
        """Index of the first sample at or after ``t``."""
        i = int(math.ceil((t - self.start) / self.dt - 1e-9))
        if i < 0 or i >= len(self.times):
            raise ContractViolation(f"time {t} outside trace [{self.start}, {self.end}]")
        return i

    def sensor(self, sensor_id: str, realm: str = "physical") -> np.ndarray:
        try:
            i = self.sensor_ids.index(sensor_id)
        except ValueError:
            raise ContractViolation(f"trace has no sensor {sensor_id!r}") from None
        return (self.cyber if realm == "cyber" else self.physical)[:, i]

    def level(self, tank_id: str) -> np.ndarray:
        try:
            return self.levels[:, self.tank_ids.index(tank_id)]
        except ValueError:
            raise ContractViolation(f"trace has no tank {tank_id!r}") from None

    def actuator(self, actuator_id: str) -> np.ndarray:
        """Boolean enabled-state series of one actuator."""
        try:
            return self.actuators[:, self.actuator_ids.index(actuator_id)]
        except ValueError:
            raise ContractViolation(f"trace has no actuator {actuator_id!r}") from None

    def sample(self, i: int) -> DualState:
        labels = self.state_labels
        return DualState(
            physical_sensors={s: float(self.physical[i, j]) for j, s in enumerate(self.sensor_ids)},
            cyber_sensors={s: float(self.cyber[i, j]) for j, s in enumerate(self.sensor_ids)},
            actuator_states={a: labels[a][0 if self.actuators[i, j] else 1] for j, a in enumerate(self.actuator_ids)},
            commanded_states={a: labels[a][0 if self.commanded[i, j] else 1] for j, a in enumerate(self.actuator_ids)},
            tank_levels={t: float(self.levels[i, j]) for j, t in enumerate(self.tank_ids)},
            time=float(self.times[i]),
        )

    @property
    def samples(self) -> List[DualState]:
        return [self.sample(i) for i in range(len(self.times))]

    def identical_to(self, other: "SimulationTrace", realm: str = "all") -> bool:
        """Bit-level equality of two traces (``realm="physical"`` ignores the cyber view)."""
        same = (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.physical, other.physical)
            and np.array_equal(self.levels, other.levels)
            and np.array_equal(self.actuators, other.actuators)
            and self.events == other.events
        )
        if realm == "all":
            same = same and np.array_equal(self.cyber, other.cyber) and np.array_equal(self.commanded, other.commanded)
        return bool(same)


def _n_steps(dt: float, horizon: float) -> int:
    if not dt > 0:
        raise ContractViolation(f"dt must be > 0, got {dt}")
    if horizon < dt:
        raise ContractViolation(f"horizon {horizon} must be >= dt {dt}")
    return int(math.floor(horizon / dt + 1e-9))


StopRule = Callable[[List[SimulationTrace]], bool]


def run_batch(
    model: PlantModel,
    initial: DualState,
    scenarios: Sequence[AttackScenario],
    dt: float = 1.0,
    horizon: float = 3600.0,
    stop: Optional[StopRule] = None,
    check_every: int = 50,
) -> List[SimulationTrace]:
    """Simulate every scenario from the same initial state; one trace per scenario.

    ``stop`` is offered the partial traces every ``check_every`` ticks; returning
    True ends the run early and the traces are truncated there.
    """
    n = _n_steps(dt, horizon)
    sim = BatchSimulator(model, initial, scenarios, dt)
    c, B = sim.c, sim.B
    S, T, A = len(c.sensor_ids), len(c.tank_ids), len(c.act_ids)
    times = sim.t0 + np.arange(n + 1) * sim.dt
    phys = np.empty((n + 1, B, S))
    cyber = np.empty((n + 1, B, S))
    levels = np.empty((n + 1, B, T))
    actual = np.empty((n + 1, B, A), dtype=bool)
    commanded = np.empty((n + 1, B, A), dtype=bool)
    events: List[List[Event]] = [[] for _ in range(B)]
    limits = {t.id: (t.underflow_level, t.overflow_level) for t in model.tanks}

    def record(k):
        phys[k], cyber[k], levels[k] = sim.phys, sim.cyber, sim.levels
        actual[k], commanded[k] = sim.actual, sim.commanded

    def traces(upto: int, copy: bool) -> List[SimulationTrace]:
        take = np.ascontiguousarray if copy else (lambda x: x)
        return [
            SimulationTrace(
                dt=sim.dt,
                times=times[:upto].copy() if copy else times[:upto],
                sensor_ids=c.sensor_ids,
                tank_ids=c.tank_ids,
                actuator_ids=c.act_ids,
                physical=take(phys[:upto, b]),
                cyber=take(cyber[:upto, b]),
                levels=take(levels[:upto, b]),
                actuators=take(actual[:upto, b]),
                commanded=take(commanded[:upto, b]),
                state_labels=dict(c.labels),
                tank_limits=dict(limits),
                events=list(events[b]) if copy else events[b],
                scenario=sc.name,
                flow_sensor_ids=tuple(c.sensor_ids[i] for i in c.flow_s),
            )
            for b, sc in enumerate(sim.scenarios)
        ]

    record(0)
    done = n
    for k in range(1, n + 1):
        for row, ev in sim.advance():
            events[row].append(ev)
        record(k)
        if stop is not None and k % check_every == 0 and k < n and stop(traces(k + 1, copy=False)):
            done = k
            break
    return traces(done + 1, copy=True)


def run(
    model: PlantModel,
    initial: DualState,
    scenario: Optional[AttackScenario] = None,
    dt: float = 1.0,
    horizon: float = 3600.0,
) -> SimulationTrace:
    """Simulate one scenario (or normal operation) for ``horizon`` seconds."""
    return run_batch(model, initial, [scenario or NO_ATTACK], dt, horizon)[0]


def step(
    model: PlantModel,
    state: DualState,
    scenario: Optional[AttackScenario] = None,
    dt: float = 1.0,
) -> Tuple[DualState, List[Event]]:
    """Advance ``state`` by one tick of length ``dt``."""
    sim = BatchSimulator(model, state, [scenario or NO_ATTACK], dt)
    events = [ev for _, ev in sim.advance()]
    return sim.state(0), events


def initial_state_from(
    model: PlantModel,
    sensor_values: Mapping[str, float],
    actuator_states: Mapping[str, Union[str, bool, int]],
    time: float = 0.0,
) -> DualState:
    """Build a consistent start state; flow readings not supplied are derived from actuators."""
    missing = [s.id for s in model.sensors if s.kind == LEVEL and s.id not in sensor_values]
    missing += [e.id for e in model.flow_elements if e.id not in actuator_states]
    if missing:
        raise ContractViolation("initial state is missing: " + ", ".join(missing))
    unknown = [k for k in sensor_values if k not in model.sensor_by_id]
    unknown += [k for k in actuator_states if k not in model.element_by_id]
    if unknown:
        raise ContractViolation("initial state names unknown components: " + ", ".join(sorted(unknown)))

    labels: Dict[str, str] = {}
    for a, value in actuator_states.items():
        el = model.element(a)
        if isinstance(value, (bool, int, float, np.integer, np.bool_)) and not isinstance(value, str):
            labels[a] = el.label(bool(value))
        else:
            el.is_enabled(value)
            labels[a] = value

    levels: Dict[str, float] = {}
    for t in model.tanks:
        sid = model.level_sensor_of(t.id)
        value = float(sensor_values[sid]) if sid is not None else t.initial_level
        levels[t.id] = min(max(value, 0.0), t.physical_height)

    derived: Dict[str, float] = {}
    for pid in model.path_order():
        p = model.path(pid)
        if p.source == EXTERNAL_SUPPLY:
            supply = None
        elif p.source in levels:
            supply = levels[p.source]
        else:
            supply = derived[p.source]
        derived[pid], _ = resolve_path_flow(model, p, {e: labels[e] for e in p.elements}, supply)

    physical: Dict[str, float] = {}
    for s in model.sensors:
        if s.kind == LEVEL:
            physical[s.id] = levels[s.attachment]
        elif s.id in sensor_values:
            physical[s.id] = float(sensor_values[s.id])
        else:
            physical[s.id] = derived[s.attachment]
    return DualState(
        physical_sensors=physical,
        cyber_sensors=dict(physical),
        actuator_states=dict(labels),
        commanded_states=dict(labels),
        tank_levels=levels,
        time=float(time),
    )


def default_initial_state(model: PlantModel, time: float = 0.0) -> DualState:
    """Start state from the tanks' ``initial_level`` and the elements' ``initial_state``."""
    sensors = {}
    for t in model.tanks:
        sid = model.level_sensor_of(t.id)
        if sid is not None:
            sensors[sid] = t.initial_level
    return initial_state_from(model, sensors, {e.id: e.initial_state for e in model.flow_elements}, time)


# --------------------------------------------------------------------------- CSV export


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(trace: SimulationTrace, path: Union[str, Path]) -> None:
    header = ["time", *trace.sensor_ids, *(f"{s}.cyber" for s in trace.sensor_ids), *trace.actuator_ids]
    labels = [trace.state_labels[a] for a in trace.actuator_ids]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(trace.times)):
            row = [_fmt(trace.times[i])]
            row += [_fmt(v) for v in trace.physical[i]]
            row += [_fmt(v) for v in trace.cyber[i]]
            row += [lab[0] if on else lab[1] for lab, on in zip(labels, trace.actuators[i])]
            w.writerow(row)


def write_events_csv(trace: SimulationTrace, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "kind", "component"])
        for ev in trace.events:
            w.writerow([_fmt(ev.time), ev.kind, ev.component])


def read_trace_csv(path: Union[str, Path]) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Times and physical sensor columns of a trace CSV written by :func:`write_trace_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or not rows[0] or rows[0][0] != "time":
        raise ContractViolation(f"{path}: not a trace CSV (needs a header starting with 'time')")
    header = rows[0]
    body = rows[1:]
    times = np.array([float(r[0]) for r in body])
    columns: Dict[str, np.ndarray] = {}
    for j, name in enumerate(header[1:], start=1):
        if name.endswith(".cyber"):
            continue
        try:
            columns[name] = np.array([float(r[j]) for r in body])
        except ValueError:
            continue  # actuator label column
    return times, columns
