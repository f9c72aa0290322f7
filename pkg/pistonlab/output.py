"""Report container and the table/CSV/JSON writers used by the command line."""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List

FORMATS = ("table", "csv", "json")
SIGNIFICANT_DIGITS = 12


def format_value(value: Any) -> str:
    """Render one cell: floats with 12 significant digits, enums by value."""
    if value is None:
        return ""
    if hasattr(value, "item") and not isinstance(value, (Enum, str)):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return f"{value:.{SIGNIFICANT_DIGITS}g}"
    return str(value)


def _normalize(value: Any) -> Any:
    """Make ``value`` JSON-safe with fixed float precision."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if hasattr(value, "item"):
        return _normalize(value.item())
    return str(value)


@dataclass
class Report:
    """Outcome of one scenario run."""

    scenario: str
    inputs: Dict[str, Any] = field(default_factory=dict)
    results: List[Dict[str, Any]] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    failed: bool = False

    def add(self, record: Dict[str, Any]):
        self.results.append(dict(record))

    def columns(self) -> List[str]:
        names = []
        for record in self.results:
            for key in record:
                if key not in names:
                    names.append(key)
        return names

    def to_json(self) -> str:
        payload = {
            "scenario": self.scenario,
            "inputs": _normalize(self.inputs),
            "results": _normalize(self.results),
            "diagnostics": _normalize(self.diagnostics),
        }
        return json.dumps(payload, indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        columns = self.columns()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for record in self.results:
            writer.writerow([format_value(record.get(c)) for c in columns])
        return buffer.getvalue()

    def to_table(self) -> str:
        columns = self.columns()
        rows = [[format_value(r.get(c)) for c in columns] for r in self.results]
        widths = [
            max([len(c)] + [len(row[i]) for row in rows]) for i, c in enumerate(columns)
        ]
        lines = [f"# {self.scenario}"]
        if self.inputs:
            lines.append(
                "# "
                + " ".join(f"{k}={format_value(v)}" for k, v in self.inputs.items())
            )
        if columns:
            lines.append("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
            lines.append("  ".join("-" * w for w in widths))
            for row in rows:
                lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        for key, value in self.diagnostics.items():
            lines.append(f"# {key}: {format_value(value)}")
        return "\n".join(line.rstrip() for line in lines) + "\n"

    def render(self, fmt: str = "table") -> str:
        """Render in one of :data:`FORMATS`."""
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        if fmt == "table":
            return self.to_table()
        raise ValueError(f"Unknown output format: {fmt!r}")
