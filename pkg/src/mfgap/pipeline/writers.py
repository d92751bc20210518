"""
Report records and their JSON / CSV writers

Floats are written with 17 significant digits so a re-run with the same
config and seed reproduces the files byte for byte.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class Table(NamedTuple):
    """One CSV file: fixed header and rows of scalars"""
    header: list[str]
    rows: list[list[Any]]


class RunReport(NamedTuple):
    subcommand: str
    summary: dict
    tables: dict[str, Table]
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _jsonable(value: Any) -> Any:
    """Recursively convert numpy values and records into plain JSON types; non-finite floats become null"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if hasattr(value, "_asdict"):
        return _jsonable(value._asdict())
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def format_value(value: Any) -> str:
    """CSV cell text; floats in full double precision"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def report_to_json(report: RunReport, indent: int = 2) -> str:
    document = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": report.subcommand,
        "passed": report.passed,
        "checks": report.checks,
        "summary": report.summary,
        "tables": {name: {"header": t.header, "rows": t.rows} for name, t in report.tables.items()},
    }
    return json.dumps(_jsonable(document), indent=indent)


def write_table(path: Path, table: Table) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_report(report: RunReport, directory: str | Path, output_format: str = "json", prefix: str = "mfgap") -> list[Path]:
    """
    Write a run report

    json: one <prefix>_<subcommand>.json holding summary, checks and tables.
    csv: one <prefix>_<subcommand>_<table>.csv per table plus the JSON summary
    without the tables.

    Returns:
        paths written, in write order
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{prefix}_{report.subcommand}"
    written = []
    if output_format == "csv":
        for name, table in sorted(report.tables.items()):
            written.append(write_table(directory / f"{stem}_{name}.csv", table))
        summary = report._replace(tables={})
        path = directory / f"{stem}.json"
        path.write_text(report_to_json(summary) + "\n", encoding="utf-8")
        written.append(path)
    elif output_format == "json":
        path = directory / f"{stem}.json"
        path.write_text(report_to_json(report) + "\n", encoding="utf-8")
        written.append(path)
    else:
        raise ValueError(f"Unknown output format '{output_format}' (json or csv)")
    for path in written:
        logger.info("Wrote %s", path)
    return written
