"""Deterministic emission: canonical JSON and CSV with decimal-string numbers.

Floats are rendered with ``repr``, the shortest string that round-trips to
the identical double (never more than 17 significant digits), and emitted
as JSON strings; identical inputs therefore always produce byte-identical
output files.
"""

from __future__ import annotations

import io
import json

import numpy as np


def _decimal(value):
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def decimalize(obj):
    """Recursively convert numbers to decimal strings / plain ints."""
    if isinstance(obj, dict):
        return {str(k): decimalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [decimalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [decimalize(v) for v in obj.tolist()]
    return _decimal(obj)


def canonical_json(obj) -> str:
    return json.dumps(decimalize(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def csv_text(rows, columns) -> str:
    """Plain CSV; cells stringified with the same decimal convention."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        cells = []
        for col in columns:
            v = _decimal(row.get(col))
            cells.append("" if v is None else str(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
