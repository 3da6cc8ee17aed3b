"""CSV output helpers.

Every file carries a two-line header (column names, then units) and
floats are written with 17 significant digits so reruns are comparable
bit for bit.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence


def format_value(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path: str, columns: Sequence[str], units: Sequence[str],
              rows: Iterable[Sequence]) -> str:
    if len(columns) != len(units):
        raise ValueError("column and unit rows differ in length")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        fh.write(",".join(units) + "\n")
        for row in rows:
            fh.write(",".join(format_value(x) for x in row) + "\n")
    return path


def write_report(path: str, entries: dict) -> str:
    """Key-value text report, one `key = value` line per entry."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {format_value(val)}\n")
    return path
