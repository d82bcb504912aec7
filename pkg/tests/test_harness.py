import json

import numpy as np
import pandas as pd
import pytest

from icsim.engine import AttackPrimitive, AttackScenario, default_initial_state, run
from icsim.errors import ContractViolation, IngestionError
from icsim.harness import (
    SUITE_SCHEMA,
    ColumnMapping,
    estimate_lag,
    ingest,
    run_experiment_suite,
    validate_against,
)
from icsim.reference import data_path

FIXTURE = """Timestamp,LIT101,FIT101,MV101,P101,AIT201
28/12/2015 10:00:00 AM,500.0,2.6,2,1,250.1
28/12/2015 10:00:01 AM,500.5,2.6,2,1,250.2
28/12/2015 10:00:02 AM,501.0,2.6,2,1,250.2
28/12/2015 10:00:03 AM,501.5,2.6,2,1,250.3
28/12/2015 10:00:04 AM,502.0,2.6,2,1,250.3
28/12/2015 10:00:05 AM,502.5,2.6,2,1,250.4
28/12/2015 10:00:06 AM,503.0,2.6,2,1,250.4
28/12/2015 10:00:07 AM,503.5,2.6,2,1,250.5
28/12/2015 10:00:08 AM,504.0,2.6,2,1,250.5
28/12/2015 10:00:09 AM,504.5,2.6,2,1,250.6
"""

MAPPING = {
    "timestamp": "Timestamp",
    "time_format": "%d/%m/%Y %I:%M:%S %p",
    "sensors": {"LIT101": "LIT-101", "FIT101": "FIT-101"},
    "actuators": {"MV101": "MV-101", "P101": "P-101"},
    "actuator_codes": {"0": False, "1": False, "2": True},
}


@pytest.fixture
def fixture_csv(tmp_path):
    path = tmp_path / "hist.csv"
    path.write_text(FIXTURE)
    return path


def test_hand_built_fixture_maps_four_tags(fixture_csv):
    ds = ingest(fixture_csv, MAPPING)
    assert sorted(ds.tags) == ["FIT-101", "LIT-101", "MV-101", "P-101"]
    assert ds.dt == 1.0
    assert ds.times.tolist() == list(range(10))
    assert ds.sensors["LIT-101"][-1] == 504.5
    assert ds.actuators["MV-101"].all() and not ds.actuators["P-101"].any()
    assert ds.warnings == ["unmapped column ignored: AIT201"]


def test_numeric_time_column(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("t,L1\n100,5\n102,6\n104,7\n")
    ds = ingest(path, {"timestamp": "t", "sensors": {"L1": "L1"}})
    assert ds.dt == 2.0
    assert ds.times.tolist() == [0.0, 2.0, 4.0]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("Timestamp,LIT101,FIT101,MV101,P101\n", "no data rows"),
        ("Timestamp,LIT101,MV101,P101\n28/12/2015 10:00:00 AM,1,2,1\n", "FIT101"),
        (FIXTURE.replace("501.5", "abc"), "non-numeric value 'abc' in column LIT101 at data row 4"),
        (FIXTURE.replace("10:00:05", "10:00:06"), "non-uniform timestamps"),
        (FIXTURE.replace(",2,1,250.3", ",7,1,250.3"), "unmapped actuator code"),
        (FIXTURE.replace("28/12/2015 10:00:03 AM", "yesterday"), "timestamp column"),
    ],
)
def test_ingestion_errors(tmp_path, text, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(IngestionError, match=fragment):
        ingest(path, MAPPING)


def test_mapping_without_timestamp_rejected():
    with pytest.raises(IngestionError, match="timestamp"):
        ColumnMapping.from_dict({"sensors": {}})


def _write_dataset(path, trace, sensors=None):
    cols = {"time": trace.times}
    for sid in trace.sensor_ids:
        cols[sid] = trace.sensor(sid) if sensors is None else sensors[sid]
    for aid in trace.actuator_ids:
        cols[aid] = trace.actuator(aid).astype(int)
    pd.DataFrame(cols).to_csv(path, index=False)
    mapping = {
        "timestamp": "time",
        "sensors": {s: s for s in trace.sensor_ids},
        "actuators": {a: a for a in trace.actuator_ids},
        "actuator_codes": {"0": False, "1": True},
    }
    return ingest(path, mapping)


def test_first_row_initial_state_round_trip(swat, tmp_path):
    trace = run(swat, default_initial_state(swat), None, 1.0, 50.0)
    ds = _write_dataset(tmp_path / "self.csv", trace)
    state = ds.initial_state(swat)
    assert state == trace.sample(0)


def test_self_validation_is_exact(swat, tmp_path):
    trace = run(swat, default_initial_state(swat), None, 1.0, 3600.0)
    ds = _write_dataset(tmp_path / "self.csv", trace)
    report = validate_against(swat, ds, out_dir=tmp_path / "paired")
    for c in report.signals.values():
        assert c.rmse == 0.0 and c.max_abs_deviation == 0.0 and c.lag == 0.0
    assert report.flags == []
    paired = pd.read_csv(tmp_path / "paired" / "paired_LIT-101.csv")
    assert list(paired.columns) == ["time", "simulated", "historical"]
    assert len(paired) == 3601


def test_thirty_second_shift_is_recovered(swat, tmp_path):
    trace = run(swat, default_initial_state(swat), None, 1.0, 3600.0)
    shifted = {}
    for sid in trace.sensor_ids:
        x = trace.sensor(sid)
        shifted[sid] = np.concatenate([np.repeat(x[:1], 30), x[:-30]])
    ds = _write_dataset(tmp_path / "late.csv", trace, shifted)
    report = validate_against(swat, ds)
    for sid in ("LIT-101", "LIT-301", "LIT-401"):
        assert report.signals[sid].lag == 30.0
        assert report.signals[sid].rmse > 0


def test_lag_sign_and_tie_break():
    t = np.arange(200.0)
    sim = np.sin(t / 7.0)
    assert estimate_lag(sim, np.roll(sim, 5), 20) == 5
    assert estimate_lag(sim, np.roll(sim, -5), 20) == -5
    assert estimate_lag(np.ones(50), np.ones(50), 10) == 0


def test_horizon_longer_than_dataset_rejected(swat, tmp_path):
    trace = run(swat, default_initial_state(swat), None, 1.0, 100.0)
    ds = _write_dataset(tmp_path / "short.csv", trace)
    with pytest.raises(ContractViolation, match="horizon"):
        validate_against(swat, ds, horizon=200.0)


def test_shipped_synthetic_history_lags_increasingly(swat):
    ds = ingest(data_path("swat_synthetic.csv.gz"), ColumnMapping.load(data_path("swat_mapping.json")))
    assert ds.warnings == ["unmapped column ignored: AIT201"]
    report = validate_against(swat, ds, horizon=14400.0)
    lags = report.signals["LIT-101"].segment_lags
    assert len(lags) == 4
    assert all(b > a for a, b in zip(lags, lags[1:]))
    assert lags[0] >= 0
    assert "LIT-101: lag exceeds 60 s" in report.flags


# ---------------------------------------------------------------- suite


@pytest.fixture(scope="module")
def suite(swat, catalog):
    names = ["e1-close-mv101-cmd", "e2a-spoof-lit101-lowlow"]
    return run_experiment_suite(swat, {n: catalog[n] for n in names})


def test_inflow_stop_hits_fit101_hardest(suite):
    ratios = suite.entry("e1-close-mv101-cmd", "high").impact_ratios
    finite = {m: r for m, r in ratios.items() if r is not None}
    assert min(finite, key=finite.get) == "FIT-101"
    assert ratios["FIT-101"] == -1.0


def test_low_low_spoof_raises_tank1_level(suite):
    for side in ("high", "low"):
        assert suite.entry("e2a-spoof-lit101-lowlow", side).impact_ratios["LIT-101"] > 0


def test_suite_entries_and_schema(suite, tmp_path):
    assert [(e.report.scenario, e.report.state) for e in suite.entries] == [
        ("e1-close-mv101-cmd", "high"), ("e1-close-mv101-cmd", "low"),
        ("e2a-spoof-lit101-lowlow", "high"), ("e2a-spoof-lit101-lowlow", "low"),
    ]
    doc = json.loads(suite.to_json())
    assert doc["schema"] == SUITE_SCHEMA
    assert doc["entries"][0]["reference_tank"] == "T-101"
    suite.write(tmp_path / "r.json", tmp_path / "ratios.csv", tmp_path / "ttcs.csv")
    ttcs = pd.read_csv(tmp_path / "ttcs.csv")
    assert set(ttcs["process"]) == {"P1", "P2", "P3", "P4", "P5"}
    assert len(pd.read_csv(tmp_path / "ratios.csv")) == 4 * len(suite.metrics)


def test_empty_catalog_gives_empty_report(swat):
    report = run_experiment_suite(swat, {})
    assert report.entries == []
    assert json.loads(report.to_json())["entries"] == []


def test_scenario_without_reference_tank_starts_at_origin(swat):
    sc = AttackScenario("free", (AttackPrimitive("sensor_spoof", "LIT-301", 1200.0, 100.0, 300.0),))
    report = run_experiment_suite(swat, [sc])
    (entry,) = report.entries
    assert entry.start_time == 0.0 and entry.reference_tank is None
    assert entry.report.window == (100.0, 300.0)
    assert entry.report.impact_ratios["FIT-201"] < 0


def test_suite_rejects_invalid_scenario(toy, catalog):
    with pytest.raises(ContractViolation):
        run_experiment_suite(toy, [catalog["attack7"]])
