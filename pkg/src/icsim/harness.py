"""Dataset ingestion, simulated-vs-historical comparison, and the experiment suite runner."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .engine import NO_ATTACK, AttackScenario, DualState, check_scenario, default_initial_state, initial_state_from, run, run_batch
from .errors import ContractViolation, IngestionError
from .metrics import HOLD, CriticalStateSpec, ResilienceReport, find_vulnerable_states, process_specs, resilience_report
from .plant import FLOW, LEVEL, PlantModel
from .reference import NORMAL_HORIZON

SUITE_SCHEMA = "icsim.suite-report/1"
COMPARISON_SCHEMA = "icsim.comparison-report/1"
DEFAULT_MAX_LAG = 300.0
DEFAULT_SEGMENT = 3600.0
DEFAULT_LAG_BOUND = 60.0


# --------------------------------------------------------------------------- ingestion


@dataclass(frozen=True)
class ColumnMapping:
    """How dataset columns map onto plant components.

    ``actuator_codes`` translates recorded actuator values to enabled (True) or
    disabled (False); historian exports often encode states as small integers.
    """

    timestamp: str
    sensors: Mapping[str, str]
    actuators: Mapping[str, str] = field(default_factory=dict)
    actuator_codes: Mapping[str, bool] = field(default_factory=dict)
    time_format: Optional[str] = None
    dayfirst: bool = False
    provenance: str = ""

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ColumnMapping":
        try:
            return cls(
                timestamp=str(data["timestamp"]),
                sensors=dict(data.get("sensors", {})),
                actuators=dict(data.get("actuators", {})),
                actuator_codes={str(k): bool(v) for k, v in data.get("actuator_codes", {}).items()},
                time_format=data.get("time_format"),
                dayfirst=bool(data.get("dayfirst", False)),
                provenance=str(data.get("provenance", "")),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise IngestionError(f"column mapping: missing or malformed field {exc}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ColumnMapping":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except OSError as exc:
            raise IngestionError(f"cannot read mapping {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise IngestionError(f"mapping {path}: invalid JSON ({exc.msg})") from None


@dataclass
class HistoricalDataset:
    dt: float
    times: np.ndarray  # seconds from the first row
    sensors: Dict[str, np.ndarray]
    actuators: Dict[str, np.ndarray]  # enabled flags
    provenance: str = ""
    warnings: List[str] = field(default_factory=list)

    @property
    def tags(self) -> List[str]:
        return [*self.sensors, *self.actuators]

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def initial_state(self, model: PlantModel, row: int = 0) -> DualState:
        sensors = {s: float(v[row]) for s, v in self.sensors.items() if s in model.sensor_by_id}
        actuators = {a: bool(v[row]) for a, v in self.actuators.items() if a in model.element_by_id}
        return initial_state_from(model, sensors, actuators, time=0.0)


def _seconds(col: pd.Series, mapping: ColumnMapping) -> np.ndarray:
    numeric = pd.to_numeric(col, errors="coerce")
    if numeric.notna().all():
        return numeric.to_numpy(dtype=float) - float(numeric.iloc[0])
    try:
        stamps = pd.to_datetime(col.astype(str).str.strip(), format=mapping.time_format, dayfirst=mapping.dayfirst)
    except (ValueError, TypeError) as exc:
        raise IngestionError(f"timestamp column {mapping.timestamp!r}: cannot parse ({exc})") from None
    delta = stamps - stamps.iloc[0]
    return delta.dt.total_seconds().to_numpy(dtype=float)


def ingest(path: Union[str, Path], mapping: Union[ColumnMapping, Mapping[str, Any]]) -> HistoricalDataset:
    """Read a historian CSV and map its columns onto plant component ids."""
    if not isinstance(mapping, ColumnMapping):
        mapping = ColumnMapping.from_dict(mapping)
    try:
        df = pd.read_csv(path, skipinitialspace=True, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path}: file is empty") from None
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: cannot read CSV ({exc})") from None
    df.columns = [str(c).strip() for c in df.columns]
    if df.empty:
        raise IngestionError(f"{path}: no data rows")

    needed = [mapping.timestamp, *mapping.sensors, *mapping.actuators]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise IngestionError(f"{path}: mapped column(s) missing: {', '.join(missing)}")

    times = _seconds(df[mapping.timestamp], mapping)
    if len(times) >= 2:
        steps = np.diff(times)
        dt = float(steps[0])
        bad = np.nonzero(~np.isclose(steps, dt, rtol=0, atol=1e-6) | (steps <= 0))[0]
        if dt <= 0 or len(bad):
            row = int(bad[0]) + 2 if len(bad) else 2
            raise IngestionError(f"{path}: non-uniform timestamps (first irregular step at data row {row})")
    else:
        dt = 1.0

    sensors: Dict[str, np.ndarray] = {}
    for col, comp in mapping.sensors.items():
        values = pd.to_numeric(df[col], errors="coerce")
        if values.isna().any():
            row = int(np.nonzero(values.isna().to_numpy())[0][0])
            raise IngestionError(f"{path}: non-numeric value {df[col].iloc[row]!r} in column {col} at data row {row + 1}")
        sensors[comp] = values.to_numpy(dtype=float)

    actuators: Dict[str, np.ndarray] = {}
    for col, comp in mapping.actuators.items():
        raw = df[col].astype(str).str.strip()
        # integer-valued floats ("2.0") read back as the integer code
        codes = raw.map(lambda s: s[:-2] if s.endswith(".0") else s)
        unknown = sorted(set(codes) - set(mapping.actuator_codes))
        if unknown:
            raise IngestionError(f"{path}: column {col} has unmapped actuator code(s) {unknown}")
        actuators[comp] = codes.map(mapping.actuator_codes).to_numpy(dtype=bool)

    mapped = set(needed)
    warnings = [f"unmapped column ignored: {c}" for c in df.columns if c not in mapped]
    return HistoricalDataset(dt, times, sensors, actuators, mapping.provenance or str(path), warnings)


# --------------------------------------------------------------------------- comparison


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        return -np.inf
    return float(np.dot(a, b) / den)


def estimate_lag(
    simulated: np.ndarray,
    historical: np.ndarray,
    max_lag_steps: int,
    lo: int = 0,
    hi: Optional[int] = None,
) -> int:
    """Shift ``k`` maximising correlation of ``simulated[i]`` with ``historical[i + k]``.

    Positive ``k`` means the historical signal lags behind the simulation.
    Only indices ``lo <= i < hi`` of the simulated signal take part. Ties go
    to the smallest ``|k|``; a flat pair of signals yields 0.
    """
    n = len(simulated)
    hi = n if hi is None else hi
    best_k, best = 0, -np.inf
    for k in sorted(range(-max_lag_steps, max_lag_steps + 1), key=lambda k: (abs(k), k)):
        i0, i1 = max(lo, -k), min(hi, n - k)
        if i1 - i0 < 2:
            continue
        c = _ncc(simulated[i0:i1], historical[i0 + k:i1 + k])
        if c > best + 1e-12:
            best_k, best = k, c
    return best_k


@dataclass
class SignalComparison:
    signal: str
    rmse: float
    max_abs_deviation: float
    lag: float
    segment_lags: List[float]
    flagged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rmse": self.rmse,
            "max_abs_deviation": self.max_abs_deviation,
            "lag_seconds": self.lag,
            "segment_lags_seconds": list(self.segment_lags),
            "lag_exceeds_bound": self.flagged,
        }


@dataclass
class ComparisonReport:
    window: Tuple[float, float]
    signals: Dict[str, SignalComparison]
    lag_bound: float
    max_lag: float
    segment: float
    provenance: str = ""

    @property
    def flags(self) -> List[str]:
        return [f"{s}: lag exceeds {self.lag_bound:g} s" for s, c in self.signals.items() if c.flagged]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": COMPARISON_SCHEMA,
            "provenance": self.provenance,
            "window": list(self.window),
            "max_lag_seconds": self.max_lag,
            "segment_seconds": self.segment,
            "lag_bound_seconds": self.lag_bound,
            "signals": {s: c.to_dict() for s, c in self.signals.items()},
            "flags": self.flags,
        }


def validate_against(
    model: PlantModel,
    dataset: HistoricalDataset,
    horizon: Optional[float] = None,
    max_lag: float = DEFAULT_MAX_LAG,
    segment: float = DEFAULT_SEGMENT,
    lag_bound: float = DEFAULT_LAG_BOUND,
    out_dir: Union[str, Path, None] = None,
) -> ComparisonReport:
    """Simulate from the dataset's first row and compare every mapped sensor signal."""
    dt = dataset.dt
    horizon = dataset.span if horizon is None else float(horizon)
    if horizon > dataset.span + 1e-9:
        raise ContractViolation(f"dataset covers {dataset.span:g} s, shorter than horizon {horizon:g} s")
    trace = run(model, dataset.initial_state(model), None, dt, horizon)
    n = len(trace.times)
    lag_steps = int(round(max_lag / dt))
    seg_steps = max(1, int(round(segment / dt)))

    signals: Dict[str, SignalComparison] = {}
    for sid in [s.id for s in model.sensors if s.id in dataset.sensors]:
        sim = trace.sensor(sid)
        hist = dataset.sensors[sid][:n]
        diff = sim - hist
        lag = estimate_lag(sim, hist, lag_steps) * dt
        seg_lags = [
            estimate_lag(sim, hist, lag_steps, lo, min(n, lo + seg_steps)) * dt for lo in range(0, n - 1, seg_steps)
        ]
        flagged = any(abs(x) > lag_bound for x in [lag, *seg_lags])
        signals[sid] = SignalComparison(
            sid, float(np.sqrt(np.mean(diff**2))), float(np.max(np.abs(diff))), float(lag), seg_lags, flagged
        )
        if out_dir is not None:
            write_paired_csv(Path(out_dir) / f"paired_{sid}.csv", trace.times, sim, hist)
    return ComparisonReport((float(trace.start), float(trace.end)), signals, lag_bound, max_lag, segment, dataset.provenance)


def write_paired_csv(path: Path, times: np.ndarray, simulated: np.ndarray, historical: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "simulated", "historical"])
        for t, s, h in zip(times, simulated, historical):
            w.writerow([repr(float(t)), repr(float(s)), repr(float(h))])


# --------------------------------------------------------------------------- experiment suite


@dataclass
class SuiteEntry:
    report: ResilienceReport
    reference_tank: Optional[str]
    start_time: float
    start_level: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        out = self.report.to_dict()
        out["reference_tank"] = self.reference_tank
        out["start_time"] = self.start_time
        out["start_level"] = self.start_level
        return out


@dataclass
class SuiteReport:
    plant: str
    dt: float
    metrics: List[str]
    processes: Dict[str, CriticalStateSpec]
    entries: List[SuiteEntry] = field(default_factory=list)

    def entry(self, scenario: str, state: str) -> ResilienceReport:
        for e in self.entries:
            if e.report.scenario == scenario and e.report.state == state:
                return e.report
        raise KeyError((scenario, state))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": SUITE_SCHEMA,
            "plant": self.plant,
            "dt": self.dt,
            "metrics": list(self.metrics),
            "processes": {k: v.to_dict() for k, v in self.processes.items()},
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, json_path: Path, ratios_csv: Path, ttcs_csv: Path) -> None:
        json_path.write_text(self.to_json())
        with open(ratios_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "state", "metric", "ratio"])
            for e in self.entries:
                for m, r in e.report.impact_ratios.items():
                    w.writerow([e.report.scenario, e.report.state, m, "" if r is None else repr(r)])
        with open(ttcs_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "state", "process", "ttcs_seconds"])
            for e in self.entries:
                for p, t in e.report.ttcs.items():
                    w.writerow([e.report.scenario, e.report.state, p, "not reached" if t is None else repr(t)])


def run_experiment_suite(
    model: PlantModel,
    catalog: Union[Mapping[str, AttackScenario], Sequence[AttackScenario]],
    spec: Optional[Mapping[str, CriticalStateSpec]] = None,
    dt: float = 1.0,
    normal_horizon: float = NORMAL_HORIZON,
    method: str = HOLD,
) -> SuiteReport:
    """Attack every scenario from the high and low vulnerable states of its reference tank.

    Windows in the catalog are relative to the start state. Scenarios without a
    reference tank start from the plant's default state at its own time origin.
    All runs sharing a start state go through one batch together with the
    matching no-attack run.
    """
    scenarios = list(catalog.values()) if isinstance(catalog, Mapping) else list(catalog)
    specs = dict(process_specs(model) if spec is None else spec)
    metrics = [s.id for s in model.sensors if s.kind in (LEVEL, FLOW)]
    report = SuiteReport(model.name, dt, metrics, specs)
    if not scenarios:
        return report
    for sc in scenarios:
        check_scenario(model, sc)
        if not sc.primitives:
            raise ContractViolation(f"scenario {sc.name!r} has no primitives")
        if sc.reference_tank is not None:
            model.tank(sc.reference_tank)

    normal = None
    groups: Dict[Tuple[Optional[str], str], List[AttackScenario]] = {}
    for sc in scenarios:
        sides = ("high", "low") if sc.reference_tank else ("initial",)
        for side in sides:
            groups.setdefault((sc.reference_tank, side), []).append(sc)

    starts: Dict[Tuple[Optional[str], str], DualState] = {}
    for tank, side in groups:
        if tank is None:
            starts[(tank, side)] = default_initial_state(model)
            continue
        if normal is None:
            normal = run(model, default_initial_state(model), None, dt, normal_horizon)
        hi, lo = find_vulnerable_states(normal, tank)
        starts[(tank, "high")] = hi.snapshot
        starts[(tank, "low")] = lo.snapshot

    for (tank, side), members in groups.items():
        start = starts[(tank, side)]
        t0 = start.time
        shifted = [sc.shifted(t0) if tank is not None else sc for sc in members]
        horizon = max(sc.window[1] for sc in shifted) - t0
        traces = run_batch(model, start, [NO_ATTACK, *shifted], dt, horizon)
        base = traces[0]
        for sc, tr in zip(shifted, traces[1:]):
            a, b = sc.window
            r = resilience_report(base, tr, metrics, specs, a, b, method)
            r.state = side
            level = start.tank_levels[tank] if tank else None
            report.entries.append(SuiteEntry(r, tank, t0, level))
    order = {sc.name: i for i, sc in enumerate(scenarios)}
    side_rank = {"high": 0, "low": 1, "initial": 2}
    report.entries.sort(key=lambda e: (order[e.report.scenario], side_rank[e.report.state]))
    return report
