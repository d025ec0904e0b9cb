"""Report value objects and their byte-stable serialization."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

SCHEMA_VERSION = "v1"


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


def format_cell(value: Any) -> str:
    """CSV cell: ints verbatim, floats as shortest round-trip decimals."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def canonical_json(obj: Any) -> bytes:
    return (json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n").encode()


@dataclass
class Series:
    """A named table: ordered columns of equal length."""

    name: str
    columns: dict
    units: str = ""
    description: str = ""

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"series {self.name!r} has ragged columns")

    def to_csv(self) -> bytes:
        buf = io.StringIO(newline="")
        names = list(self.columns)
        buf.write(",".join(names) + "\n")
        rows = zip(*(self.columns[n] for n in names)) if names else []
        for row in rows:
            buf.write(",".join(format_cell(v) for v in row) + "\n")
        return buf.getvalue().encode()

    def to_dict(self) -> dict:
        return {"name": self.name, "units": self.units, "description": self.description,
                "columns": list(self.columns), "rows": len(next(iter(self.columns.values()), []))}


@dataclass
class Verdict:
    """One acceptance check.  ``passed is None`` marks a report-only check."""

    criterion: str
    statistic: str
    threshold: str
    observed: Any
    passed: Optional[bool]
    note: str = ""

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "statistic": self.statistic,
                "threshold": self.threshold, "observed": self.observed,
                "passed": self.passed, "note": self.note}


@dataclass
class ExperimentReport:
    study: str
    series: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add_series(self, name: str, columns: dict, units: str = "", description: str = "") -> Series:
        s = Series(name, {k: list(v) for k, v in columns.items()}, units, description)
        self.series.append(s)
        return s

    def check(self, criterion: str, statistic: str, threshold: str, observed: Any,
              passed: Optional[bool], note: str = "") -> Verdict:
        v = Verdict(str(criterion), statistic, threshold, _plain(observed),
                    None if passed is None else bool(passed), note)
        self.verdicts.append(v)
        return v

    @property
    def enabled(self) -> list:
        return [v for v in self.verdicts if v.passed is not None]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.enabled)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "study": self.study,
            "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "series": [s.to_dict() for s in self.series],
            "summary": self.summary,
            "notes": list(self.notes),
            "provenance": self.provenance,
        }

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())
