"""Generate the shipped SWaT-like historian fixture.

The "historical" plant is the calibrated reference plant with every design flow
rate scaled down slightly, so its control cycles run a little slower than the
model's and the estimated lag grows over the four hours. Columns follow the
historian's tag style (``LIT101``), actuators use its state codes (1 closed or
off, 2 open or on) and one chemistry column is included that the mapping leaves
unmapped.
"""
import argparse
import dataclasses
import sys
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from icsim.engine import default_initial_state, run
from icsim.reference import data_path, swat_plant

START = datetime(2015, 12, 28, 10, 0, 0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", type=float, default=0.985, help="flow-rate factor of the historical plant")
    ap.add_argument("--horizon", type=float, default=14400.0)
    ap.add_argument("--out", default=str(data_path("swat_synthetic.csv.gz")))
    args = ap.parse_args(argv)

    model = swat_plant()
    slow = dataclasses.replace(
        model,
        flow_elements=tuple(
            dataclasses.replace(e, design_flow_rate=e.design_flow_rate * args.scale) for e in model.flow_elements
        ),
    )
    trace = run(slow, default_initial_state(slow), None, 1.0, args.horizon)
    stamps = [START + timedelta(seconds=float(t)) for t in trace.times]
    frame = {"Timestamp": [s.strftime("%d/%m/%Y %I:%M:%S %p") for s in stamps]}
    for sid in trace.sensor_ids:
        frame[sid.replace("-", "")] = np.round(trace.sensor(sid), 6)
    for aid in trace.actuator_ids:
        frame[aid.replace("-", "")] = np.where(trace.actuator(aid), 2, 1)
    frame["AIT201"] = 250.0  # conductivity, not modelled
    pd.DataFrame(frame).to_csv(args.out, index=False)
    print(f"wrote {len(stamps)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
