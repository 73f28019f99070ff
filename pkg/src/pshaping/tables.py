"""Column tables written as CSV with unit-bearing headers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# column-name suffix -> unit
UNITS = {"_dbm": "dBm", "_db": "dB", "_km": "km", "_w": "W", "_4d": "bit/4D-symbol",
         "mu4": "1", "mu6": "1", "seed": "-", "warning": "flag"}


def unit_of(column: str) -> str:
    for suffix, unit in UNITS.items():
        if column.endswith(suffix):
            return unit
    return "-"


def units_line(columns) -> str:
    """Comment line naming the unit of every column."""
    return "# units: " + ", ".join(f"{c}={unit_of(c)}" for c in columns) + "\n"


@dataclass
class Table:
    """Rows of values under named columns, e.g. ``"snr_db"``.

    Column names carry their unit as a suffix (``_db``, ``_dbm``, ``_km``,
    ``_w``, ``_4d`` for bit/4D-sym) so a written CSV is self-describing.
    """

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def where(self, **match) -> "Table":
        idx = [self.columns.index(k) for k in match]
        keep = [r for r in self.rows if all(r[j] == v for j, v in zip(idx, match.values()))]
        return Table(self.columns, keep)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path, extra_columns: dict | None = None) -> Path:
        """Write with a header row; ``extra_columns`` adds constant columns."""
        extra = extra_columns or {}
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(units_line(list(extra) + list(self.columns)))
            w = csv.writer(fh)
            w.writerow(list(extra) + list(self.columns))
            for r in self.rows:
                w.writerow(list(extra.values()) + [_fmt(v) for v in r])
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.ndarray):
        return " ".join(repr(float(x)) for x in v)
    return v
