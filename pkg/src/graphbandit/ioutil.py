"""Deterministic text serialization helpers.

All floats leaving the package (JSON, CSV) are printed with 17 significant
digits, which round-trips IEEE doubles exactly and makes reruns
byte-identical.
"""

from __future__ import annotations

import math
from typing import Any, Iterable, Sequence

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite value not serializable: {x}")
    return format(x, ".17g")


def dumps_json(obj: Any) -> str:
    """Compact JSON text with %.17g floats; dict key order is preserved."""
    if isinstance(obj, dict):
        items = ",".join(f'"{k}":{dumps_json(v)}' for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_json(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps_json(obj.tolist())
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if obj is None:
        return "null"
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """CSV with %.17g floats and plain integers; unix newlines."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(format_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
