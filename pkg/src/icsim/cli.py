"""``icsim`` command-line front end.

Every subcommand reads files and writes files into ``--out-dir``. Output file
names carry a timestamp from an injectable clock; file contents never do, so two
identical invocations produce byte-identical reports.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .engine import (
    NO_ATTACK,
    default_initial_state,
    initial_state_from,
    read_trace_csv,
    run,
    scenario_from_dict,
    write_events_csv,
    write_trace_csv,
)
from .errors import ContractViolation
from .harness import ColumnMapping, ingest, run_experiment_suite, validate_against
from .metrics import HOLD, TRAPEZOID, OperatingCurve, impact_ratio, interval_flows
from .plant import FLOW, all_sensor_ids, plant_to_dict
from .reference import calibrate, data_path, load_catalog, load_targets, resolve_plant, swat_plant, write_calibration
from .slicer import load_threat, slice_model

Clock = Callable[[], datetime]
ERROR_PREFIX = "icsim-error"


class UsageError(ContractViolation):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(message)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _window(text: str) -> Tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START,END in seconds, got {text!r}") from None
    return a, b


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ContractViolation(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Context:
    def __init__(self, args: argparse.Namespace, clock: Clock):
        self.args = args
        self.stamp = clock().strftime("%Y%m%dT%H%M%SZ")
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def path(self, stem: str, suffix: str) -> Path:
        p = self.out / f"{stem}-{self.stamp}{suffix}"
        self.written.append(p)
        return p


# --------------------------------------------------------------------------- subcommands


def cmd_slice(ctx: _Context) -> None:
    model = resolve_plant(ctx.args.plant)
    intent, capability = load_threat(ctx.args.threat)
    result = slice_model(model, intent, capability)
    doc = {
        "plant": model.name,
        "intent": {"metric_sensors": sorted(intent.metric_sensors)},
        "capability": {"sensors": sorted(capability.sensors), "actuators": sorted(capability.actuators)},
        "slice": result.to_dict(),
    }
    ctx.path("slice", ".json").write_text(_dump(doc))


def cmd_simulate(ctx: _Context) -> None:
    a = ctx.args
    model = resolve_plant(a.plant)
    if a.scenario and a.scenario_name:
        raise UsageError("give either --scenario or --scenario-name, not both")
    scenario = NO_ATTACK
    if a.scenario:
        scenario = scenario_from_dict(_read_json(a.scenario))
    elif a.scenario_name:
        catalog = load_catalog(a.catalog, model)
        if a.scenario_name not in catalog:
            raise ContractViolation(f"no scenario named {a.scenario_name!r} in catalog")
        scenario = catalog[a.scenario_name]
    if a.init:
        init = _read_json(a.init)
        state = initial_state_from(model, init.get("sensors", {}), init.get("actuators", {}), float(init.get("time", 0.0)))
    else:
        state = default_initial_state(model)
    trace = run(model, state, scenario, a.dt, a.horizon)
    write_trace_csv(trace, ctx.path("trace", ".csv"))
    write_events_csv(trace, ctx.path("events", ".csv"))


def cmd_validate(ctx: _Context) -> None:
    a = ctx.args
    model = resolve_plant(a.plant)
    dataset = ingest(a.dataset, ColumnMapping.load(a.mapping))
    paired = ctx.out / f"paired-{ctx.stamp}"
    report = validate_against(model, dataset, a.horizon, a.max_lag, a.segment, a.lag_bound, out_dir=paired)
    doc = report.to_dict()
    doc["warnings"] = dataset.warnings
    ctx.path("comparison", ".json").write_text(_dump(doc))


def cmd_metrics(ctx: _Context) -> None:
    a = ctx.args
    t_normal, normal = read_trace_csv(a.normal)
    t_degraded, degraded = read_trace_csv(a.degraded)
    metrics = a.metric or [m for m in normal if m in degraded]
    start, end = a.window if a.window else (None, None)
    flows = set(all_sensor_ids(resolve_plant(a.plant), FLOW)) if a.plant else set()
    ratios: Dict[str, Optional[float]] = {}
    for m in metrics:
        if m not in normal or m not in degraded:
            raise ContractViolation(f"metric {m!r} missing from one of the traces")
        n, d = normal[m], degraded[m]
        if m in flows:
            n, d = interval_flows(n), interval_flows(d)
        ratios[m] = impact_ratio(OperatingCurve(m, t_normal, n), OperatingCurve(m, t_degraded, d), start, end, a.method)
    window = [start if start is not None else float(t_normal[0]), end if end is not None else float(t_normal[-1])]
    ctx.path("impact", ".json").write_text(_dump({"window": window, "method": a.method, "impact_ratios": ratios}))
    with open(ctx.path("impact", ".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "ratio"])
        for m, r in ratios.items():
            w.writerow([m, repr(r)])


def cmd_experiment(ctx: _Context) -> None:
    a = ctx.args
    model = resolve_plant(a.plant)
    catalog = load_catalog(a.catalog, model)
    if a.scenarios:
        unknown = [n for n in a.scenarios if n not in catalog]
        if unknown:
            raise ContractViolation("unknown scenario(s): " + ", ".join(unknown))
        catalog = {n: catalog[n] for n in a.scenarios}
    report = run_experiment_suite(model, catalog, dt=a.dt, normal_horizon=a.normal_horizon, method=a.method)
    report.write(ctx.path("suite", ".json"), ctx.path("suite-ratios", ".csv"), ctx.path("suite-ttcs", ".csv"))


def cmd_catalog(ctx: _Context) -> None:
    catalog = load_catalog(ctx.args.catalog, swat_plant() if ctx.args.catalog is None else None)
    for name, sc in catalog.items():
        print(f"{name}\t{len(sc.primitives)} primitive(s)\t{sc.description}")


def cmd_calibrate(ctx: _Context) -> None:
    a = ctx.args
    if a.plant != "swat":
        raise ContractViolation("calibration fits the shipped five-stage layout; use --plant swat")
    cal, report = calibrate(load_targets(a.targets), budget=a.budget, tolerance=a.tolerance, dt=a.dt)
    ctx.path("swat-calibrated", ".json").write_text(_dump(plant_to_dict(swat_plant(cal))))
    write_calibration(cal, report, ctx.path("calibration", ".json"))


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults (keys are flag names without dashes)")
    common.add_argument("--dt", type=float, default=1.0, help="tick length in seconds (default 1)")
    common.add_argument("--horizon", type=float, default=None, help="simulated seconds")
    common.add_argument("--out-dir", default=".", help="directory for output files (default .)")
    common.add_argument("--window", type=_window, default=None, help="analysis window START,END in seconds")

    p = _Parser(prog="icsim", description="Dual cyber/physical ICS simulator and resilience analysis toolkit.")
    p.add_argument("--version", action="version", version=f"icsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("slice", parents=[common], help="slice a plant by a threat model")
    s.add_argument("--plant", required=True, help="plant file, or 'swat' / 'toy'")
    s.add_argument("--threat", required=True, help="threat model JSON")
    s.set_defaults(func=cmd_slice)

    s = sub.add_parser("simulate", parents=[common], help="run one scenario and export the trace")
    s.add_argument("--plant", required=True)
    s.add_argument("--scenario", help="scenario JSON file")
    s.add_argument("--scenario-name", help="scenario from the catalog")
    s.add_argument("--catalog", help="catalog JSON (default: shipped catalog)")
    s.add_argument("--init", help="initial state JSON with 'sensors' and 'actuators' maps")
    s.set_defaults(func=cmd_simulate, horizon_default=3600.0)

    s = sub.add_parser("validate", parents=[common], help="compare simulation with a historical dataset")
    s.add_argument("--plant", required=True)
    s.add_argument("--dataset", required=True, help="historian CSV")
    s.add_argument("--mapping", required=True, help="column mapping JSON")
    s.add_argument("--max-lag", type=float, default=300.0)
    s.add_argument("--segment", type=float, default=3600.0)
    s.add_argument("--lag-bound", type=float, default=60.0)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("metrics", parents=[common], help="impact ratios between two trace CSVs")
    s.add_argument("normal", help="normal-operation trace CSV")
    s.add_argument("degraded", help="attacked trace CSV")
    s.add_argument("--metric", action="append", help="metric column (repeatable; default all shared)")
    s.add_argument("--method", choices=[HOLD, TRAPEZOID], default=HOLD)
    s.add_argument("--plant", help="plant whose flow-sensor columns are re-aligned to their tick start")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("experiment", parents=[common], help="run the experiment suite over a catalog")
    s.add_argument("--plant", required=True)
    s.add_argument("--catalog", help="catalog JSON (default: shipped catalog)")
    s.add_argument("--scenarios", nargs="+", help="subset of catalog names")
    s.add_argument("--normal-horizon", type=float, default=14400.0)
    s.add_argument("--method", choices=[HOLD, TRAPEZOID], default=HOLD)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("catalog", parents=[common], help="list named attack scenarios")
    s.add_argument("--catalog", help="catalog JSON (default: shipped catalog)")
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("calibrate", parents=[common], help="fit tank geometry to target TTCS values")
    s.add_argument("--plant", default="swat")
    s.add_argument("--targets", default=str(data_path("swat_targets.json")))
    s.add_argument("--budget", type=int, default=6)
    s.add_argument("--tolerance", type=float, default=0.005)
    s.set_defaults(func=cmd_calibrate)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise ContractViolation(f"{args.config}: config must be a JSON object")
        known = vars(args)
        unknown = [k for k in cfg if k.replace("-", "_") not in known]
        if unknown:
            raise ContractViolation(f"{args.config}: unknown option(s) {', '.join(sorted(unknown))}")
        # explicit flags win over config values
        explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in explicit:
                setattr(args, key, _window(",".join(map(str, v))) if key == "window" and v is not None else v)
    if args.horizon is None:
        args.horizon = getattr(args, "horizon_default", None)
    if args.dt is not None and not args.dt > 0:
        raise ContractViolation(f"--dt must be > 0, got {args.dt}")
    return args


def main(argv: Optional[Sequence[str]] = None, clock: Optional[Clock] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(build_parser(), argv)
        ctx = _Context(args, clock or _utc_now)
        args.func(ctx)
    except ContractViolation as exc:
        msg = " ".join(str(exc).split())
        print(f"{ERROR_PREFIX}: {exc.code}: {msg}", file=sys.stderr)
        return 2
    for p in ctx.written:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
