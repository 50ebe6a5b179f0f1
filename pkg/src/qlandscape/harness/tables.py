"""Long-format result tables with provenance, written as CSV plus a schema file."""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from .config import jsonable

VERSION = f"v{__version__}"

PROVENANCE_COLUMNS = (
    ("config_hash", "SHA-256 prefix of the resolved configuration"),
    ("seed", "seed of the experiment cell that produced the row"),
    ("version", "package version that produced the row"),
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)

    def add(self, row: dict):
        self.rows.append(row)

    def column_names(self):
        return [c for c, _ in self.columns] + [c for c, _ in PROVENANCE_COLUMNS]

    def to_csv(self, config_hash) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.column_names())
        for row in self.rows:
            cells = [_fmt(row.get(c)) for c, _ in self.columns]
            cells += [config_hash, _fmt(row.get("seed", "")), VERSION]
            writer.writerow(cells)
        return buf.getvalue()

    def schema(self) -> dict:
        return {
            "table": self.name,
            "format": "csv, header row, one record per line",
            "columns": [{"name": c, "description": d} for c, d in list(self.columns) + list(PROVENANCE_COLUMNS)],
        }


def write_table(table: ResultTable, out_dir, config_hash) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{table.name}.csv"
    path.write_text(table.to_csv(config_hash))
    (out / f"{table.name}.schema.json").write_text(json.dumps(table.schema(), indent=2) + "\n")
    return path


def write_summary(summary: dict, out_dir, name="summary") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def read_table(path):
    """Rows of a written table as dicts of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
