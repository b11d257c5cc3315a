"""
Serialization of session summaries and sweep grids.

Key order, CSV header and number formatting are fixed so output is
byte-reproducible for a given config and seed.
"""

import csv
import io
import json
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from .metrics import SessionSummary
from .sweep import GridCell, SweepGrid


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


SUMMARY_KEYS = (
    "protocol",
    "rounds",
    "noise_p",
    "eve_p",
    "eve_mode",
    "bell_ratio",
    "seed",
    "sifted_rate",
    "conclusive_rate",
    "qber_percent",
    "chsh_s",
    "risk",
    "decision",
)
GRID_HEADER = ("noise_p", "eve_p", "qber_percent", "rate", "chsh_s", "risk", "decision")


def format_number(value: Optional[float]) -> str:
    """6 significant digits, positional notation, trailing zeros trimmed; '' for None."""
    if value is None:
        return ""
    text = np.format_float_positional(
        float(value), precision=6, unique=True, fractional=False, trim="-"
    )
    return "0" if text == "-0" else text


def _json_number(value: Optional[float]) -> Optional[float]:
    return None if value is None else float(format_number(value))


def summary_fields(summary: SessionSummary) -> Dict[str, Any]:
    """Summary as an ordered mapping over SUMMARY_KEYS, None for inapplicable fields."""
    return {
        "protocol": summary.protocol.value,
        "rounds": summary.rounds,
        "noise_p": _json_number(summary.noise_p),
        "eve_p": _json_number(summary.eve_p),
        "eve_mode": summary.eve_mode,
        "bell_ratio": _json_number(summary.bell_ratio),
        "seed": summary.seed,
        "sifted_rate": _json_number(summary.sifted_rate),
        "conclusive_rate": _json_number(summary.conclusive_rate),
        "qber_percent": _json_number(summary.qber.percent),
        "chsh_s": _json_number(summary.chsh_s),
        "risk": summary.risk.label,
        "decision": None if summary.decision is None else summary.decision.verdict.value,
    }


def _csv_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_number(value)
    return str(value)


def _write_csv(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def emit_summary(summary: SessionSummary, fmt: OutputFormat = OutputFormat.JSON) -> str:
    fields = summary_fields(summary)
    if OutputFormat(fmt) is OutputFormat.JSON:
        return json.dumps(fields, ensure_ascii=False) + "\n"
    return _write_csv(SUMMARY_KEYS, [[_csv_text(fields[key]) for key in SUMMARY_KEYS]])


def _grid_row(cell: GridCell):
    return [
        format_number(cell.noise_p),
        format_number(cell.eve_p),
        format_number(100 * cell.qber),
        format_number(cell.rate),
        format_number(cell.s),
        cell.risk.label,
        "" if cell.decision is None else cell.decision.verdict.value,
    ]


def emit_grid_csv(grid: SweepGrid, provenance: Optional[str] = None) -> str:
    """Grid as CSV in row-major order; `provenance` becomes a leading ``# `` comment line."""
    text = _write_csv(GRID_HEADER, [_grid_row(cell) for cell in grid.cells])
    if provenance is None:
        return text
    return f"# {provenance}\n{text}"


def emit_grid_json(grid: SweepGrid) -> str:
    cells = [dict(zip(GRID_HEADER, row)) for row in (_grid_row(c) for c in grid.cells)]
    for cell in cells:
        for key in ("noise_p", "eve_p", "qber_percent", "rate", "chsh_s"):
            cell[key] = float(cell[key]) if cell[key] else None
        cell["decision"] = cell["decision"] or None
    payload = {"spec": grid.spec.model_dump(mode="json"), "cells": cells}
    return json.dumps(payload, ensure_ascii=False) + "\n"
