"""Shipped plant configurations, the named attack catalog, and SWaT geometry calibration.

Tank geometry of the five-stage plant is not published, so cross-section areas and
overflow levels are fitted until worst-case time-to-critical-state from the
vulnerable states matches the target table. Per-stage design rates come from the
target flow magnitudes.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .engine import AttackScenario, SimulationTrace, check_scenario, default_initial_state, run, scenario_from_dict
from .errors import ContractViolation
from .metrics import VulnerableState, find_vulnerable_states, tank_spec, worst_case_ttcs
from .plant import PlantModel, load_plant, plant_from_dict
from .slicer import ThreatCapability

THROUGHPUT = 1.14  # m³/hr, plant design throughput
NORMAL_HORIZON = 14400.0
SEARCH_HORIZON = 3600.0
EXPERIMENT_HORIZON = 10800.0

# flow sensor whose target magnitude sets each element's design rate
_RATE_SOURCE = {
    "MV-101": "FIT-101",
    "P-101": "FIT-201",
    "MV-201": "FIT-201",
    "P-301": "FIT-301",
    "P-401": "FIT-401",
    "P-501": "FIT-501",
}


def data_path(name: str) -> Path:
    return Path(str(resources.files("icsim") / "data" / name))


def _read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ContractViolation(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def toy_plant() -> PlantModel:
    """Single tank filled by ``Pump_in`` and drained by ``Pump_out`` under a two-statement band controller."""
    return load_plant(data_path("toy.json"))


# --------------------------------------------------------------------------- calibration set


@dataclass(frozen=True)
class TtcsTarget:
    process: str
    tank: str
    side: str  # "high" | "low"
    seconds: float

    @property
    def key(self) -> str:
        return f"{self.process}.{self.side}"


@dataclass(frozen=True)
class CalibrationSet:
    """Free geometry parameters of the five-stage plant plus the targets they are fitted to."""

    areas: Mapping[str, float] = field(default_factory=dict)
    overflow_levels: Mapping[str, float] = field(default_factory=dict)
    underflow_levels: Mapping[str, float] = field(default_factory=dict)
    yield_fraction: Optional[float] = None
    design_rates: Mapping[str, float] = field(default_factory=dict)
    ttcs_targets: Tuple[TtcsTarget, ...] = ()
    flow_targets: Mapping[str, float] = field(default_factory=dict)

    TANKS = ("T-101", "T-301", "T-401")

    @classmethod
    def nominal(cls) -> "CalibrationSet":
        """Uncalibrated plant: every design rate at plant throughput, geometry seeded analytically."""
        base = cls.from_dict(_read_json(data_path("swat_targets.json")))
        rates = {e: THROUGHPUT for e in _RATE_SOURCE}
        start = replace(base, design_rates=rates, yield_fraction=1.0, underflow_levels={t: 0.0 for t in cls.TANKS})
        areas, overflow = seed_parameters(start)
        return replace(start, areas=areas, overflow_levels=overflow)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CalibrationSet":
        try:
            targets = tuple(
                TtcsTarget(proc, spec["tank"], side, float(spec[side]))
                for proc, spec in data.get("ttcs_targets", {}).items()
                for side in ("high", "low")
                if side in spec
            )
            yf = data.get("yield_fraction")
            return cls(
                areas={k: float(v) for k, v in data.get("areas", {}).items()},
                overflow_levels={k: float(v) for k, v in data.get("overflow_levels", {}).items()},
                underflow_levels={k: float(v) for k, v in data.get("underflow_levels", {}).items()},
                yield_fraction=None if yf is None else float(yf),
                design_rates={k: float(v) for k, v in data.get("design_rates", {}).items()},
                ttcs_targets=targets,
                flow_targets={k: float(v) for k, v in data.get("flow_targets", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"calibration set: malformed entry ({exc})") from None

    def to_dict(self) -> Dict[str, Any]:
        targets: Dict[str, Dict[str, Any]] = {}
        for t in self.ttcs_targets:
            targets.setdefault(t.process, {"tank": t.tank})[t.side] = t.seconds
        return {
            "areas": dict(self.areas),
            "overflow_levels": dict(self.overflow_levels),
            "underflow_levels": dict(self.underflow_levels),
            "yield_fraction": self.yield_fraction,
            "design_rates": dict(self.design_rates),
            "ttcs_targets": targets,
            "flow_targets": dict(self.flow_targets),
        }

    def missing(self) -> List[str]:
        gaps = [f"areas[{t}]" for t in self.TANKS if t not in self.areas]
        gaps += [f"overflow_levels[{t}]" for t in self.TANKS if t not in self.overflow_levels]
        gaps += [f"design_rates[{e}]" for e in _RATE_SOURCE if e not in self.design_rates]
        if self.yield_fraction is None:
            gaps.append("yield_fraction")
        return gaps

    def problems(self) -> List[str]:
        out = [f"{name} {k} must be > 0" for name, d in (("area", self.areas), ("design rate", self.design_rates))
               for k, v in d.items() if not v > 0]
        if self.yield_fraction is not None and not 0 < self.yield_fraction <= 1:
            out.append("yield_fraction must lie in (0, 1]")
        for t, ov in self.overflow_levels.items():
            if not self.underflow_levels.get(t, 0.0) < ov:
                out.append(f"{t}: underflow level must be below overflow level")
        return out


def rates_from_flow_targets(flow_targets: Mapping[str, float]) -> Tuple[Dict[str, float], float]:
    """Per-element design rates and RO yield implied by target flow magnitudes."""
    try:
        rates = {e: float(flow_targets[s]) for e, s in _RATE_SOURCE.items()}
        yf = float(flow_targets["FIT-502"]) / float(flow_targets["FIT-501"])
    except KeyError as exc:
        raise ContractViolation(f"flow targets lack {exc.args[0]}") from None
    return rates, yf


def load_targets(path: Union[str, Path, None] = None) -> CalibrationSet:
    return CalibrationSet.from_dict(_read_json(path or data_path("swat_targets.json")))


def default_calibration() -> CalibrationSet:
    return CalibrationSet.from_dict(_read_json(data_path("swat_calibration.json"))["calibration"])


def swat_plant(calibration: Optional[CalibrationSet] = None) -> PlantModel:
    """Five-stage plant with geometry, rates and RO yield taken from ``calibration``."""
    cal = default_calibration() if calibration is None else calibration
    gaps = cal.missing()
    if gaps:
        raise ContractViolation("incomplete calibration: " + ", ".join(gaps))
    bad = cal.problems()
    if bad:
        raise ContractViolation("invalid calibration: " + "; ".join(bad))
    data = copy.deepcopy(_read_json(data_path("swat.json")))
    for t in data["tanks"]:
        t["cross_section_area"] = cal.areas[t["id"]]
        t["overflow_level"] = cal.overflow_levels[t["id"]]
        t["underflow_level"] = cal.underflow_levels.get(t["id"], t["underflow_level"])
    for e in data["flow_elements"]:
        e["design_flow_rate"] = cal.design_rates[e["id"]]
    for p in data["flow_paths"]:
        if p["id"] == "PATH-501":
            p["yield_fraction"] = cal.yield_fraction
    return plant_from_dict(data)


def _band(model: PlantModel, tank: str) -> Tuple[float, float]:
    sensor = model.level_sensor_of(tank)
    named = model.sensor_thresholds(sensor) if sensor else {}
    if "L" not in named or "H" not in named:
        raise ContractViolation(f"{tank}: level sensor needs L and H thresholds")
    return named["L"], named["H"]


def _fill_drain(model: PlantModel, tank: str) -> Tuple[float, float]:
    fill = sum(min(model.element(e).design_flow_rate for e in p.elements) for p in model.flow_paths if p.sink == tank)
    drain = sum(min(model.element(e).design_flow_rate for e in p.elements) for p in model.flow_paths if p.source == tank)
    return fill, drain


def seed_parameters(cal: CalibrationSet) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Closed-form areas and overflow levels from the target table.

    Low-side time is a drain from the L threshold to the underflow level at the
    tank's full outflow; high-side time is a fill from the H threshold to the
    overflow level at its full inflow.
    """
    if not cal.ttcs_targets:
        raise ContractViolation("seeding needs time-to-critical-state targets")
    placeholder = replace(
        cal,
        areas={t: 1.0 for t in CalibrationSet.TANKS},
        overflow_levels={t: 1200.0 for t in CalibrationSet.TANKS},
        yield_fraction=cal.yield_fraction or 1.0,
    )
    model = swat_plant(placeholder)
    targets = {(t.tank, t.side): t.seconds for t in cal.ttcs_targets}
    areas: Dict[str, float] = {}
    overflow: Dict[str, float] = {}
    for tank in CalibrationSet.TANKS:
        low, high = _band(model, tank)
        fill, drain = _fill_drain(model, tank)
        under = cal.underflow_levels.get(tank, 0.0)
        # volume m³ = rate m³/hr * seconds / 3600; level mm = volume / area * 1000
        areas[tank] = drain * targets[(tank, "low")] / 3600.0 / ((low - under) / 1000.0)
        overflow[tank] = high + fill * targets[(tank, "high")] / 3600.0 / areas[tank] * 1000.0
    return areas, overflow


# --------------------------------------------------------------------------- measurement and fit


@dataclass
class TargetPoint:
    key: str
    tank: str
    side: str
    target: float
    measured: Optional[float]
    start_level: float
    witness: Optional[str]

    @property
    def residual(self) -> Optional[float]:
        if self.measured is None:
            return None
        return (self.measured - self.target) / self.target


def measure_targets(
    model: PlantModel,
    targets: Tuple[TtcsTarget, ...],
    dt: float = 1.0,
    normal_horizon: float = NORMAL_HORIZON,
    search_horizon: float = SEARCH_HORIZON,
) -> List[TargetPoint]:
    """Worst-case TTCS from each tank's vulnerable states under full capability."""
    normal = run(model, default_initial_state(model), None, dt, normal_horizon)
    capability = ThreatCapability.everything(model)
    states: Dict[str, Tuple[VulnerableState, VulnerableState]] = {}
    out = []
    for t in targets:
        if t.tank not in states:
            states[t.tank] = find_vulnerable_states(normal, t.tank)
        start = states[t.tank][0 if t.side == "high" else 1]
        wc = worst_case_ttcs(model, start, capability, tank_spec(t.tank, t.side), search_horizon, dt)
        out.append(
            TargetPoint(t.key, t.tank, t.side, t.seconds, wc.ttcs, start.level, wc.witness.name if wc.witness else None)
        )
    return out


@dataclass
class CalibrationReport:
    seeds: Dict[str, Dict[str, float]]
    iterations: List[Dict[str, Optional[float]]]
    points: List[TargetPoint]
    converged: bool
    flags: List[str]

    @property
    def residuals(self) -> Dict[str, Optional[float]]:
        return {p.key: p.residual for p in self.points}

    def within(self, tolerance: float) -> List[str]:
        return [p.key for p in self.points if p.residual is not None and abs(p.residual) <= tolerance]

    def conflicting(self, tolerance: float) -> List[str]:
        return [p.key for p in self.points if p.residual is None or abs(p.residual) > tolerance]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seeds": self.seeds,
            "iterations": self.iterations,
            "targets": [
                {**asdict(p), "residual": p.residual} for p in self.points
            ],
            "converged": self.converged,
            "flags": list(self.flags),
        }


def calibrate(
    targets: CalibrationSet,
    budget: int = 6,
    tolerance: float = 0.005,
    dt: float = 1.0,
) -> Tuple[CalibrationSet, CalibrationReport]:
    """Fit tank areas and overflow levels so worst-case TTCS hits the targets.

    Starts from the closed-form seeds and applies a fixed-point correction per
    simulated iteration: drain time scales linearly with area, fill time with
    area times the height from the start level to overflow.
    """
    if budget < 1:
        raise ContractViolation("calibration budget must be at least one iteration")
    keys = {(t.tank, t.side) for t in targets.ttcs_targets}
    missing = [f"{tank}.{side}" for tank in CalibrationSet.TANKS for side in ("high", "low") if (tank, side) not in keys]
    if missing:
        raise ContractViolation("calibration targets missing: " + ", ".join(missing))

    rates, yf = rates_from_flow_targets(targets.flow_targets) if targets.flow_targets else (
        dict(targets.design_rates), targets.yield_fraction
    )
    cal = replace(
        targets,
        design_rates=rates,
        yield_fraction=yf,
        underflow_levels={t: targets.underflow_levels.get(t, 0.0) for t in CalibrationSet.TANKS},
    )
    areas, overflow = seed_parameters(cal)
    seeds = {"areas": dict(areas), "overflow_levels": dict(overflow)}
    flags: List[str] = []
    iterations: List[Dict[str, Optional[float]]] = []
    converged = False
    points: List[TargetPoint] = []
    by_key = {(t.tank, t.side): t for t in cal.ttcs_targets}

    for it in range(budget):
        cal = replace(cal, areas=dict(areas), overflow_levels=dict(overflow))
        model = swat_plant(cal)
        points = measure_targets(model, cal.ttcs_targets, dt)
        iterations.append({p.key: p.residual for p in points})
        worst = max((abs(p.residual) if p.residual is not None else float("inf")) for p in points)
        if worst <= tolerance:
            converged = True
            break
        if it == budget - 1:
            break
        got = {(p.tank, p.side): p for p in points}
        for tank in CalibrationSet.TANKS:
            low, high = got[(tank, "low")], got[(tank, "high")]
            a_old = areas[tank]
            if low.measured:
                areas[tank] = a_old * by_key[(tank, "low")].seconds / low.measured
            if high.measured:
                h = high.start_level
                span = (overflow[tank] - h) * (by_key[(tank, "high")].seconds / high.measured) * (a_old / areas[tank])
                overflow[tank] = h + span
            ceiling = model.tank(tank).physical_height
            if overflow[tank] > ceiling:
                flags.append(f"{tank}: overflow level clamped to physical height {ceiling} mm")
                overflow[tank] = ceiling

    if not converged:
        flags.append(f"not converged to {tolerance:.1%} within {budget} iterations")
    report = CalibrationReport(seeds, iterations, points, converged, flags)
    return cal, report


def write_calibration(cal: CalibrationSet, report: CalibrationReport, path: Union[str, Path]) -> None:
    doc = {"calibration": cal.to_dict(), "report": report.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- catalog


def load_catalog(path: Union[str, Path, None] = None, model: Optional[PlantModel] = None) -> Dict[str, AttackScenario]:
    """Named scenarios in file order; each is validated when ``model`` is given."""
    data = _read_json(path or data_path("swat_catalog.json"))
    entries = data.get("scenarios", data) if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ContractViolation("catalog must hold a list of scenarios")
    out: Dict[str, AttackScenario] = {}
    for entry in entries:
        sc = scenario_from_dict(entry)
        if sc.name in out:
            raise ContractViolation(f"catalog: duplicate scenario name {sc.name!r}")
        if model is not None:
            check_scenario(model, sc)
        out[sc.name] = sc
    return out


def resolve_plant(name_or_path: Union[str, Path]) -> PlantModel:
    """``swat`` and ``toy`` name the shipped configs; anything else is a plant file path."""
    if str(name_or_path) == "swat":
        return swat_plant()
    if str(name_or_path) == "toy":
        return toy_plant()
    return load_plant(name_or_path)


def normal_trace(model: PlantModel, dt: float = 1.0, horizon: float = NORMAL_HORIZON) -> SimulationTrace:
    return run(model, default_initial_state(model), None, dt, horizon)
