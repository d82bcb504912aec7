"""Refit the five-stage plant geometry and refresh the shipped calibration files.

Writes ``swat_calibration.json`` (fitted parameters plus residual report) and
updates the calibrated fields of ``swat.json`` so the plant file stands alone.
"""
import json
import sys

from icsim.plant import plant_to_dict
from icsim.reference import calibrate, data_path, load_targets, swat_plant, write_calibration


def main() -> int:
    cal, report = calibrate(load_targets())
    write_calibration(cal, report, data_path("swat_calibration.json"))
    data_path("swat.json").write_text(json.dumps(plant_to_dict(swat_plant(cal)), indent=2) + "\n")
    for p in report.points:
        print(f"{p.key:8s} target {p.target:8.1f}  fitted {p.measured}  residual {p.residual:+.4%}  witness {p.witness}")
    print("converged" if report.converged else "NOT converged", *report.flags)
    return 0


if __name__ == "__main__":
    sys.exit(main())
