"""Result tables: append-only rows written as CSV, and plot-data emission."""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidConfigError
from .spec import SCHEMA_VERSION

LEAD = ["schema", "experiment", "spec_hash", "seed", "row", "status"]
TAIL = ["runtime_ms"]


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


@dataclass
class ResultTable:
    experiment: str
    spec_hash: str
    seed: int
    rows: list = field(default_factory=list)

    def append(self, status, runtime_ms=0.0, **values):
        row = {"schema": SCHEMA_VERSION, "experiment": self.experiment,
               "spec_hash": self.spec_hash, "seed": self.seed, "row": len(self.rows),
               "status": status}
        row.update(values)
        row["runtime_ms"] = round(float(runtime_ms), 1)
        self.rows.append(row)
        return row

    @property
    def columns(self):
        cols = list(LEAD)
        for r in self.rows:
            for k in r:
                if k not in cols and k not in TAIL:
                    cols.append(k)
        return cols + TAIL

    @property
    def ok(self):
        return all(r["status"] == "ok" for r in self.rows)

    def failures(self):
        return [r for r in self.rows if r["status"] != "ok"]

    def column(self, name):
        if self.rows and all(name not in r for r in self.rows):
            raise InvalidConfigError(f"unknown column {name}")
        return [r.get(name) for r in self.rows]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
        text = buf.getvalue()
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


def emit_plotdata(table, columns, path=None):
    """two (or more) whitespace-separated columns with a '#' header.

    Numbers use repr formatting, independent of the locale. Rows missing a
    requested value are skipped; an empty table gives just the header.
    """
    if not columns:
        raise InvalidConfigError("no columns requested")
    known = set(table.columns)
    for c in columns:
        if c not in known:
            raise InvalidConfigError(f"unknown column {c}")
    lines = ["# " + " ".join(columns)]
    for r in table.rows:
        vals = [r.get(c) for c in columns]
        if any(v is None or v == "" for v in vals):
            continue
        lines.append(" ".join(_fmt(float(v)) if isinstance(v, (int, float)) and not isinstance(v, bool)
                              else _fmt(v) for v in vals))
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text
