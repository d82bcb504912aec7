"""Resilience metrics over simulation traces.

Impact ratio compares the area under a degraded operating curve with the area
under the normal one. Time-to-critical-state measures how long after attack onset
the first critical predicate holds. Vulnerable states are the extreme operating
points of normal operation, used as attack start states for worst-case search.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .engine import (
    COMMAND_SPOOF,
    OVERFLOW,
    SENSOR_SPOOF,
    UNDERFLOW,
    AttackPrimitive,
    AttackScenario,
    DualState,
    SimulationTrace,
    run_batch,
)
from .errors import ContractViolation, DegenerateDenominatorError, InsufficientTraceError
from .plant import PlantModel
from .slicer import ThreatCapability

HOLD = "hold"
TRAPEZOID = "trapezoid"

DEFAULT_EPSILON = 0.01
DEFAULT_SUSTAIN = 10.0
_TOL = 1e-9


# --------------------------------------------------------------------------- impact ratio


@dataclass(frozen=True)
class OperatingCurve:
    metric: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.shape != values.shape:
            raise ContractViolation(f"curve {self.metric}: times and values must be equal-length 1-D arrays")
        if len(times) < 2:
            raise ContractViolation(f"curve {self.metric}: needs at least two samples")
        steps = np.diff(times)
        if not (steps > 0).all():
            raise ContractViolation(f"curve {self.metric}: times must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
            raise ContractViolation(f"curve {self.metric}: sampling must be uniform")
        if not np.isfinite(values).all():
            raise ContractViolation(f"curve {self.metric}: values must be finite")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_trace(cls, trace: SimulationTrace, metric: str) -> "OperatingCurve":
        """Physical-realm curve of a sensor, or a tank level when ``metric`` is a tank id.

        Flow sensors are re-aligned with :func:`interval_flows` so the value at
        each sample is the flow that runs from that sample to the next.
        """
        if metric in trace.tank_ids:
            return cls(metric, trace.times, trace.level(metric))
        values = trace.sensor(metric, "physical")
        if metric in trace.flow_sensor_ids:
            values = interval_flows(values)
        return cls(metric, trace.times, values)


def interval_flows(recorded: np.ndarray) -> np.ndarray:
    """Shift flows recorded at the end of each tick onto the tick's start sample.

    A trace records at ``t[k]`` the flow of the tick ending there. Hold
    integration needs the flow of the tick starting there. The final sample
    repeats, which hold integration never reads.
    """
    recorded = np.asarray(recorded, dtype=float)
    if len(recorded) < 2:
        return recorded.copy()
    return np.append(recorded[1:], recorded[-1])


def _area(curve: OperatingCurve, a: float, b: float, method: str) -> float:
    t, v = curve.times, curve.values
    if method == HOLD:
        # value of sample i holds over [t_i, t_i+1)
        lo = np.clip(t[:-1], a, b)
        hi = np.clip(t[1:], a, b)
        return float(np.sum(v[:-1] * (hi - lo)))
    if method == TRAPEZOID:
        inner = t[(t > a) & (t < b)]
        grid = np.concatenate(([a], inner, [b]))
        vals = np.interp(grid, t, v)
        return float(np.sum((vals[1:] + vals[:-1]) * 0.5 * np.diff(grid)))
    raise ContractViolation(f"unknown integration method {method!r}")


def impact_ratio(
    normal: OperatingCurve,
    degraded: OperatingCurve,
    t_start: Optional[float] = None,
    t_end: Optional[float] = None,
    method: str = HOLD,
) -> float:
    """Relative change in area under the curve; negative means performance loss."""
    if normal.metric != degraded.metric:
        raise ContractViolation(f"curves measure different metrics: {normal.metric} vs {degraded.metric}")
    if normal.times.shape != degraded.times.shape or not np.allclose(
        normal.times, degraded.times, rtol=0, atol=1e-9
    ):
        raise ContractViolation("normal and degraded curves are not on the same time grid")
    a = float(normal.times[0]) if t_start is None else float(t_start)
    b = float(normal.times[-1]) if t_end is None else float(t_end)
    if not a < b:
        raise ContractViolation(f"analysis window [{a}, {b}] is empty")
    if a < normal.times[0] - _TOL or b > normal.times[-1] + _TOL:
        raise ContractViolation(
            f"analysis window [{a}, {b}] exceeds curve span [{normal.times[0]}, {normal.times[-1]}]"
        )
    base = _area(normal, a, b, method)
    if base == 0.0:
        raise DegenerateDenominatorError(f"normal curve of {normal.metric} has zero area over [{a}, {b}]")
    return (_area(degraded, a, b, method) - base) / base


# --------------------------------------------------------------------------- critical states


@dataclass(frozen=True)
class TankOverflow:
    tank: str

    def first_time(self, trace: SimulationTrace, i0: int, t_end: float) -> Optional[float]:
        t0 = float(trace.times[i0])
        if trace.level(self.tank)[i0] >= trace.tank_limits[self.tank][1]:
            return t0
        return _first_event(trace, OVERFLOW, self.tank, t0, t_end)

    def describe(self) -> Dict[str, Any]:
        return {"predicate": "tank_overflow", "tank": self.tank}


@dataclass(frozen=True)
class TankUnderflow:
    tank: str

    def first_time(self, trace: SimulationTrace, i0: int, t_end: float) -> Optional[float]:
        t0 = float(trace.times[i0])
        if trace.level(self.tank)[i0] <= trace.tank_limits[self.tank][0]:
            return t0
        return _first_event(trace, UNDERFLOW, self.tank, t0, t_end)

    def describe(self) -> Dict[str, Any]:
        return {"predicate": "tank_underflow", "tank": self.tank}


@dataclass(frozen=True)
class ZeroFlow:
    """Flow below ``epsilon`` for at least ``sustain`` seconds.

    ``sustain=None`` demands the flow stays below ``epsilon`` until the end of
    the analysis range, which distinguishes a stopped process from a pump that
    is merely latched off between control cycles.
    """

    sensor: str
    epsilon: float = DEFAULT_EPSILON
    sustain: Optional[float] = DEFAULT_SUSTAIN

    def __post_init__(self):
        if self.epsilon < 0 or (self.sustain is not None and self.sustain < 0):
            raise ContractViolation(f"zero_flow({self.sensor}): epsilon and sustain must be >= 0")

    def first_time(self, trace: SimulationTrace, i0: int, t_end: float) -> Optional[float]:
        i1 = int(np.searchsorted(trace.times, t_end + _TOL, side="right"))
        low = trace.sensor(self.sensor)[i0:i1] < self.epsilon
        if not low.any():
            return None
        times = trace.times[i0:i1]
        if self.sustain is None:
            if not low[-1]:
                return None
            above = np.nonzero(~low)[0]
            start = 0 if len(above) == 0 else int(above[-1]) + 1
            return float(times[start])
        # starts and ends (inclusive) of runs of low samples
        edges = np.diff(np.concatenate(([0], low.astype(np.int8), [0])))
        starts = np.nonzero(edges == 1)[0]
        ends = np.nonzero(edges == -1)[0] - 1
        ok = times[ends] - times[starts] >= self.sustain - _TOL
        if not ok.any():
            return None
        return float(times[starts[np.argmax(ok)]])

    def describe(self) -> Dict[str, Any]:
        return {"predicate": "zero_flow", "sensor": self.sensor, "epsilon": self.epsilon, "sustain": self.sustain}


Predicate = Union[TankOverflow, TankUnderflow, ZeroFlow]


def _first_event(trace: SimulationTrace, kind: str, component: str, t0: float, t_end: float) -> Optional[float]:
    for ev in trace.events:
        if ev.kind == kind and ev.component == component and t0 - _TOL <= ev.time <= t_end + _TOL:
            return float(ev.time)
    return None


@dataclass(frozen=True)
class CriticalStateSpec:
    predicates: Tuple[Predicate, ...]
    scope: str = "global"

    @property
    def waits_for_end(self) -> bool:
        return any(isinstance(p, ZeroFlow) and p.sustain is None for p in self.predicates)

    @property
    def max_sustain(self) -> float:
        return max((p.sustain or 0.0 for p in self.predicates if isinstance(p, ZeroFlow)), default=0.0)

    def check(self, model: PlantModel) -> None:
        for p in self.predicates:
            if isinstance(p, ZeroFlow):
                model.sensor(p.sensor)
            else:
                model.tank(p.tank)

    def to_dict(self) -> Dict[str, Any]:
        return {"scope": self.scope, "predicates": [p.describe() for p in self.predicates]}


def predicate_from_dict(data: Mapping[str, Any]) -> Predicate:
    kind = data.get("predicate")
    try:
        if kind == "tank_overflow":
            return TankOverflow(data["tank"])
        if kind == "tank_underflow":
            return TankUnderflow(data["tank"])
        if kind == "zero_flow":
            sustain = data.get("sustain", DEFAULT_SUSTAIN)
            return ZeroFlow(
                data["sensor"],
                float(data.get("epsilon", DEFAULT_EPSILON)),
                None if sustain is None else float(sustain),
            )
    except KeyError as exc:
        raise ContractViolation(f"critical-state predicate {kind}: missing {exc.args[0]!r}") from None
    raise ContractViolation(f"unknown critical-state predicate {kind!r}")


def process_specs(model: PlantModel) -> Dict[str, CriticalStateSpec]:
    """Local critical-state spec of every process declared by the plant."""
    out = {}
    for label, preds in model.processes.items():
        spec = CriticalStateSpec(tuple(predicate_from_dict(p) for p in preds), scope=f"local({label})")
        spec.check(model)
        out[label] = spec
    return out


def tank_spec(tank: str, side: str) -> CriticalStateSpec:
    """Overflow spec for the ``high`` side of a tank, underflow spec for ``low``."""
    if side == "high":
        return CriticalStateSpec((TankOverflow(tank),), scope=f"local({tank})")
    if side == "low":
        return CriticalStateSpec((TankUnderflow(tank),), scope=f"local({tank})")
    raise ContractViolation(f"side must be 'high' or 'low', got {side!r}")


def time_to_critical_state(
    trace: SimulationTrace,
    spec: CriticalStateSpec,
    t_attack: float,
    t_end: Optional[float] = None,
) -> Optional[float]:
    """Seconds from ``t_attack`` until the first predicate holds; ``None`` if never."""
    i0 = trace.index_at(t_attack)
    end = trace.end if t_end is None else min(float(t_end), trace.end)
    hits = [p.first_time(trace, i0, end) for p in spec.predicates]
    hits = [h for h in hits if h is not None]
    if not hits:
        return None
    return max(0.0, min(hits) - t_attack)


# --------------------------------------------------------------------------- vulnerable states


@dataclass(frozen=True)
class VulnerableState:
    tank: str
    side: str  # "high" | "low"
    snapshot: DualState

    @property
    def description(self) -> Tuple[str, str]:
        return self.side, self.tank

    @property
    def level(self) -> float:
        return self.snapshot.tank_levels[self.tank]


def turning_points(levels: np.ndarray) -> np.ndarray:
    """Sample indices where the level changes direction (plateaus ignored)."""
    d = np.diff(np.asarray(levels, dtype=float))
    moving = np.nonzero(d != 0)[0]
    if len(moving) < 2:
        return np.array([], dtype=int)
    sgn = np.sign(d[moving])
    flips = np.nonzero(sgn[1:] != sgn[:-1])[0] + 1
    return moving[flips]


def find_vulnerable_states(normal_trace: SimulationTrace, tank: str) -> Tuple[VulnerableState, VulnerableState]:
    """Highest and lowest operating points of ``tank`` after the warm-up segment."""
    levels = normal_trace.level(tank)
    turns = turning_points(levels)
    if len(turns) < 2:
        raise InsufficientTraceError(f"{tank}: trace holds no complete control cycle ({len(turns)} turning points)")
    steady = levels[turns[0]:]
    hi = int(turns[0] + np.argmax(steady))
    lo = int(turns[0] + np.argmin(steady))
    return (
        VulnerableState(tank, "high", normal_trace.sample(hi)),
        VulnerableState(tank, "low", normal_trace.sample(lo)),
    )


# --------------------------------------------------------------------------- worst case


def _threshold_atoms(model: PlantModel, sensor: str) -> List[Tuple[str, float]]:
    named = model.sensor_thresholds(sensor)
    return sorted(named.items(), key=lambda kv: (kv[1], kv[0]))


def attack_atoms(model: PlantModel, capability: ThreatCapability) -> List[Tuple[str, str, str, Union[str, float]]]:
    """``(name, kind, target, value)`` for every single constant attack the capability allows."""
    atoms = []
    for s in model.sensors:
        if s.id in capability.sensors:
            for suffix, _ in _threshold_atoms(model, s.id):
                atoms.append((f"spoof {s.id} {suffix}", SENSOR_SPOOF, s.id, f"{s.id}.{suffix}"))
    for e in model.flow_elements:
        if e.id in capability.actuators:
            for label in e.state_labels:
                atoms.append((f"force {e.id} {label}", COMMAND_SPOOF, e.id, label))
    return atoms


def canonical_attack_family(
    model: PlantModel,
    capability: ThreatCapability,
    start: float,
    horizon: float,
    max_order: int = 2,
) -> List[AttackScenario]:
    """Constant-primitive attacks and their combinations on distinct targets, held for ``horizon``."""
    if max_order < 1:
        raise ContractViolation("max_order must be >= 1")
    atoms = attack_atoms(model, capability)
    family = []
    for order in range(1, max_order + 1):
        for combo in itertools.combinations(atoms, order):
            if len({a[2] for a in combo}) < order:
                continue
            prims = tuple(AttackPrimitive(kind, target, value, start, start + horizon) for _, kind, target, value in combo)
            family.append(AttackScenario(" + ".join(a[0] for a in combo), prims))
    return family


@dataclass
class WorstCase:
    ttcs: Optional[float]
    witness: Optional[AttackScenario]
    candidates: Dict[str, Optional[float]] = field(default_factory=dict)

    def __iter__(self) -> Iterator[Any]:
        yield self.ttcs
        yield self.witness


def _best(results: Mapping[str, Optional[float]]) -> Tuple[Optional[float], Optional[str]]:
    reached = [(t, name) for name, t in results.items() if t is not None]
    if not reached:
        return None, None
    t, name = min(reached)
    return t, name


def worst_case_ttcs(
    model: PlantModel,
    start: Union[VulnerableState, DualState],
    capability: ThreatCapability,
    spec: CriticalStateSpec,
    horizon: float,
    dt: float = 1.0,
    max_order: int = 2,
) -> WorstCase:
    """Smallest TTCS over the canonical attack family, ties broken by scenario name."""
    state = start.snapshot if isinstance(start, VulnerableState) else start
    spec.check(model)
    t0 = state.time
    family = canonical_attack_family(model, capability, t0, horizon, max_order)
    if not family:
        return WorstCase(None, None, {})
    by_name = {sc.name: sc for sc in family}

    def evaluate(traces: Sequence[SimulationTrace]) -> Dict[str, Optional[float]]:
        return {tr.scenario: time_to_critical_state(tr, spec, t0) for tr in traces}

    stop = None
    if not spec.waits_for_end:
        margin = spec.max_sustain

        def stop(partial: List[SimulationTrace]) -> bool:
            best, _ = _best(evaluate(partial))
            return best is not None and partial[0].end - t0 >= best + margin

    traces = run_batch(model, state, family, dt, horizon, stop=stop)
    results = evaluate(traces)
    best, name = _best(results)
    return WorstCase(best, by_name[name] if name else None, results)


# --------------------------------------------------------------------------- reports


@dataclass
class ResilienceReport:
    impact_ratios: Dict[str, Optional[float]]
    ttcs: Dict[str, Optional[float]]
    window: Tuple[float, float]
    scenario: str = ""
    state: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "state": self.state,
            "window": list(self.window),
            "impact_ratios": dict(self.impact_ratios),
            "ttcs": {k: ("not reached" if v is None else v) for k, v in self.ttcs.items()},
        }


def resilience_report(
    normal: SimulationTrace,
    attacked: SimulationTrace,
    metrics: Sequence[str],
    specs: Mapping[str, CriticalStateSpec],
    t_start: float,
    t_end: float,
    method: str = HOLD,
) -> ResilienceReport:
    """Impact ratio per metric and TTCS per process for one attacked run.

    A metric whose normal curve has zero area over the window gets ``None``.
    """
    if not (normal.start - _TOL <= t_start < t_end <= normal.end + _TOL):
        raise ContractViolation(f"window [{t_start}, {t_end}] outside trace [{normal.start}, {normal.end}]")
    ratios: Dict[str, Optional[float]] = {}
    for m in metrics:
        try:
            ratios[m] = impact_ratio(
                OperatingCurve.from_trace(normal, m), OperatingCurve.from_trace(attacked, m), t_start, t_end, method
            )
        except DegenerateDenominatorError:
            ratios[m] = None
    ttcs = {label: time_to_critical_state(attacked, spec, t_start, t_end) for label, spec in specs.items()}
    return ResilienceReport(ratios, ttcs, (t_start, t_end), attacked.scenario)
