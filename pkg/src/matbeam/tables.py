"""CSV helpers shared by the library writers and the CLI."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence


def format_number(value, precision: int | None):
    """Floats as ``repr`` (round-trippable) or fixed `precision` decimals."""
    if isinstance(value, float):
        return repr(value) if precision is None else f"{value:.{precision}f}"
    if value is None:
        return ""
    return value


def write_rows(path_or_file, header: Sequence[str], rows: Iterable[Sequence], precision: int | None = None) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v, precision) for v in row])

    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            emit(fh)
    else:
        emit(path_or_file)
