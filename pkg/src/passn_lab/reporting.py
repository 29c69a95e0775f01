"""Deterministic CSV/JSON report emission with schema validation.

Every recipe writes the same flat row format (recipe, params, metric,
value, n, epoch) so downstream tooling can consume any run identically.
Floats are serialized with repr (shortest round-trip form) and files end
with a single newline, which makes equal runs byte-identical.
"""

import csv
import importlib.resources
import json
from dataclasses import dataclass

import jsonschema

from .errors import DomainError

__all__ = ["ReportRow", "REPORT_COLUMNS", "write_report", "write_summary", "write_table"]

REPORT_COLUMNS = ("recipe", "params", "metric", "value", "n", "epoch")


@dataclass(frozen=True)
class ReportRow:
    recipe: str
    params: str
    metric: str
    value: float
    n: int = None
    epoch: int = None

    def as_json_obj(self) -> dict:
        return {
            "recipe": self.recipe,
            "params": self.params,
            "metric": self.metric,
            "value": float(self.value),
            "n": None if self.n is None else int(self.n),
            "epoch": None if self.epoch is None else int(self.epoch),
        }


def flatten_params(params: dict) -> str:
    """Stable key=value;... rendering of a parameter block."""
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


def _load_schema(name: str) -> dict:
    text = (
        importlib.resources.files("passn_lab").joinpath("schemas", name).read_text()
    )
    return json.loads(text)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(path, rows) -> None:
    """Validate rows against the report schema and write them as CSV."""
    payload = [row.as_json_obj() for row in rows]
    try:
        jsonschema.validate(payload, _load_schema("report.schema.json"))
    except jsonschema.ValidationError as err:
        raise DomainError(f"report rows violate the schema: {err.message}") from err
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in payload:
            writer.writerow([_format_cell(row[col]) for col in REPORT_COLUMNS])


def write_summary(path, summary: dict) -> None:
    """Validate the summary against its schema and write deterministic JSON."""
    try:
        jsonschema.validate(summary, _load_schema("summary.schema.json"))
    except jsonschema.ValidationError as err:
        raise DomainError(f"summary violates the schema: {err.message}") from err
    with open(path, "w") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")


def write_table(path, header, rows) -> None:
    """Write an auxiliary detail table (fixed header, plain cells)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])
