"""Benchmark report rows, metadata and CSV/JSON emission."""

import csv
import datetime
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

# fixed column order of the CSV form
COLUMNS = (
    "experiment", "mode", "equation", "dim", "order", "rk", "cells", "nk", "seed",
    "cfl", "t_end", "workers", "transport", "backend", "dof", "steps", "dt_min",
    "dt_max", "wall_time", "time_per_dof", "time_per_worker_dof", "l2_error",
    "slope", "speedup", "efficiency", "device", "power_watts", "energy",
    "energy_per_dof", "target_error", "fitted_dof", "fit_c", "reference_c",
    "status", "note",
)
_INT = {"dim", "order", "nk", "seed", "workers", "dof", "steps"}
_STR = {"experiment", "mode", "equation", "rk", "cells", "transport", "backend",
        "device", "status", "note"}
FAILED = "failed"


@dataclass
class BenchReport:
    experiment: str
    rows: List[Dict] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)

    def add(self, **values):
        unknown = set(values) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown report columns {sorted(unknown)}")
        row = {c: values.get(c) for c in COLUMNS}
        if row["experiment"] is None:
            row["experiment"] = self.experiment
        if row["status"] is None:
            row["status"] = "ok"
        self.rows.append(row)
        return row

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] == FAILED]

    def column(self, name, **where):
        return [r[name] for r in self.select(**where)]

    def select(self, **where):
        return [r for r in self.rows if all(r.get(k) == v for k, v in where.items())]


def spec_hash(spec_dict):
    blob = json.dumps(spec_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def make_metadata(spec_dict, version, backend):
    return {
        "version": version,
        "spec_hash": spec_hash(spec_dict),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "backend": backend,
        "spec": spec_dict,
    }


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_csv(report, fh):
    w = csv.writer(fh)
    w.writerow(COLUMNS)
    for row in report.rows:
        w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float)
                    else row[c] for c in COLUMNS])


def write_json(report, fh):
    doc = {"metadata": report.metadata, "columns": list(COLUMNS),
           "rows": [{c: _clean(row[c]) for c in COLUMNS} for row in report.rows]}
    fh.write(json.dumps(doc, indent=1, allow_nan=False) + "\n")


_WRITERS = {"csv": write_csv, "json": write_json}


def emit_report(report, fmt, path):
    """Write ``report`` as ``csv`` or ``json``; refuses to write an empty report.

    ``path`` may also be an open text stream.
    """
    if not report.rows:
        raise ValueError("report has no rows; nothing written")
    if fmt not in _WRITERS:
        raise ValueError(f"unknown report format {fmt!r}")
    if hasattr(path, "write"):
        _WRITERS[fmt](report, path)
        return path
    path = Path(path)
    with open(path, "w", newline="") as fh:
        _WRITERS[fmt](report, fh)
    return path


def _parse(column, text):
    if text == "":
        return None
    if column in _STR:
        return text
    if column in _INT:
        return int(text)
    return float(text)


def read_csv_report(path):
    """Read rows written by ``emit_report(..., "csv", ...)`` back into typed dicts."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != COLUMNS:
            raise ValueError("unexpected CSV header")
        return [{c: _parse(c, v) for c, v in zip(header, line)} for line in r]


def read_json_report(path):
    doc = json.loads(Path(path).read_text())
    return doc["rows"], doc["metadata"]
