"""
Sweep records, slope fits and the CSV/JSON report pair.

records.csv: one row per record, columns eps,T,t,error,scenario,path,dt,delta,mass_drift,
sorted by (scenario, path, eps, t); floats written with 17 significant digits.

summary.json (keys sorted):
    {
      "scenario": str,
      "records": int,
      "fits": [SlopeFit, ...],
      "checks": [AcceptanceCheck, ...],
      "passed": bool,            # all checks passed (true when there are none)
      "metadata": {...}          # free-form run metadata (config name, tolerances)
    }
"""
import csv
import json
import logging
from pathlib import Path

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["eps", "T", "t", "error", "scenario", "path", "dt", "delta", "mass_drift"]


class SweepRecord(BaseModel):
    eps: float = Field(gt=0, description="Semiclassical parameter of the run.")
    T: float = Field(gt=0, description="Horizon of the run.")
    t: float = Field(ge=0, description="Time at which the error was measured.")
    error: float = Field(ge=0, description="Error norm at time t.")
    scenario: str = Field(description="Error kind: linear, subcritical, critical or superposition.")
    path: str = Field(description="Solver path label, e.g. 'y-frame' or 'lab', with the delta when swept.")
    dt: float = Field(gt=0, description="Time step actually used.")
    delta: float = Field(ge=0, description="Regularization of the logarithm actually used.")
    mass_drift: float = Field(ge=0, description="Largest relative mass drift of the runs behind this record.")

    def sort_key(self) -> tuple:
        return (self.scenario, self.path, self.eps, self.t)


class SlopeFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float
    eps_min: float
    eps_max: float
    points: int = Field(ge=0)
    t: float = Field(description="Time whose errors were fitted.")
    scenario: str = ""
    path: str = ""

    @property
    def acceptance_grade(self) -> bool:
        return self.points >= 4


class AcceptanceCheck(BaseModel):
    name: str
    passed: bool
    value: float | None = None
    bound: str = Field(default="", description="Human-readable bound the value was compared with.")


def emit_report(
    records: list[SweepRecord],
    fits: list[SlopeFit],
    path: str | Path,
    scenario: str = "",
    checks: list[AcceptanceCheck] | None = None,
    metadata: dict | None = None,
) -> tuple[Path, Path]:
    """Write records.csv and summary.json into the directory `path`; returns both file paths."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    checks = checks or []

    csv_path = directory / "records.csv"
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for record in sorted(records, key=SweepRecord.sort_key):
            writer.writerow([_format(getattr(record, column)) for column in RECORD_COLUMNS])

    summary = {
        "scenario": scenario,
        "records": len(records),
        "fits": [fit.model_dump() for fit in fits],
        "checks": [check.model_dump() for check in checks],
        "passed": all(check.passed for check in checks),
        "metadata": metadata or {},
    }
    json_path = directory / "summary.json"
    with open(json_path, "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")

    logger.info(f"Wrote {len(records)} records and {len(fits)} fits to {directory}")
    return csv_path, json_path


def _format(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def load_report(path: str | Path) -> tuple[list[SweepRecord], dict]:
    """Read back a report directory written by emit_report."""
    directory = Path(path)
    with open(directory / "records.csv", newline="") as handle:
        records = [SweepRecord.model_validate(row) for row in csv.DictReader(handle)]
    with open(directory / "summary.json") as handle:
        summary = json.load(handle)
    return records, summary
