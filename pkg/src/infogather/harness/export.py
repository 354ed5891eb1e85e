"""Metrics records and their CSV/JSON serialization.

CSV files start with ``# key=value`` comment lines (seed, config hash,
command) followed by one header row and one row per record entry. Floats
are written with 9 significant digits; missing values are empty cells.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class MetricsRecord:
    columns: list
    rows: list = field(default_factory=list)  # list of dicts keyed by column
    meta: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, **row):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append(row)

    def column(self, name) -> list:
        return [r.get(name) for r in self.rows]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    try:
        return fmt(v.item())  # numpy scalars
    except AttributeError:
        return str(v)


def to_csv(rec: MetricsRecord) -> str:
    buf = io.StringIO()
    for k in sorted(rec.meta):
        buf.write(f"# {k}={rec.meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rec.columns)
    for r in rec.rows:
        w.writerow([fmt(r.get(c)) for c in rec.columns])
    return buf.getvalue()


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def to_json(rec: MetricsRecord) -> str:
    doc = {"meta": rec.meta, "columns": rec.columns, "rows": rec.rows, "summary": rec.summary}
    return json.dumps(_plain(doc), indent=1, sort_keys=True)


def from_json(text: str) -> MetricsRecord:
    doc = json.loads(text)
    return MetricsRecord(doc["columns"], doc["rows"], doc["meta"], doc["summary"])


def read_csv(path) -> tuple[dict, list[dict]]:
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            lines.append(line)
    return meta, list(csv.DictReader(lines))


def export(rec: MetricsRecord, path, format: str | None = None) -> Path:
    """Write ``rec`` to ``path``. The format follows the suffix unless given."""
    path = Path(path)
    format = format or ("json" if path.suffix == ".json" else "csv")
    if format not in ("csv", "json"):
        raise ValueError(f"unknown export format {format!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    text = to_csv(rec) if format == "csv" else to_json(rec)
    path.write_text(text)
    return path


def export_pair(rec: MetricsRecord, out) -> tuple[Path, Path]:
    """CSV at ``out`` plus the JSON record (with summary) next to it."""
    out = Path(out)
    csv_path = out if out.suffix == ".csv" else out.with_suffix(".csv")
    return export(rec, csv_path, "csv"), export(rec, csv_path.with_suffix(".json"), "json")
