"""Column-oriented result tables and their CSV/JSON writers.

A table's file contents depend only on its columns and its deterministic
metadata, so the same experiment with the same seed produces byte-identical
files. Wall time and the other per-run facts live in ``run_info`` and are
written to a ``.run.json`` sidecar next to the table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ResultTable", "FORMATS", "write_table", "read_csv", "read_json"]

FORMATS = ("csv", "json")


def _plain(value):
    """Convert numpy scalars and containers into JSON-friendly Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):  # enums
        return value.value
    return value


def _json_number(x):
    # JSON has no inf/nan; strings keep them distinguishable from null
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ResultTable:
    columns: dict[str, list]
    metadata: dict = field(default_factory=dict)
    run_info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = {str(k): [_plain(v) for v in list(col)] for k, col in self.columns.items()}
        self.metadata = _plain(self.metadata)
        lengths = {len(c) for c in self.columns.values()}
        if len(lengths) > 1:
            sizes = {k: len(c) for k, c in self.columns.items()}
            raise ValueError(f"columns: all series must have equal length, got {sizes}")

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()), []))

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def rows(self):
        return zip(*self.columns.values())

    def column(self, name: str) -> np.ndarray:
        return np.asarray([np.nan if v is None else v for v in self.columns[name]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for row in self.rows():
            writer.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "metadata": self.metadata,
            "columns": {k: [_json_number(v) for v in col] for k, col in self.columns.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"

    def meta_json(self) -> str:
        return json.dumps(self.metadata, indent=2) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"format: expected one of {FORMATS}, got {fmt!r}")


def write_table(table: ResultTable, path: str | Path, fmt: str) -> list[Path]:
    """Write ``table`` and its sidecars; returns every path written.

    CSV has nowhere to put metadata, so it goes to ``<path>.meta.json``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = [path]
    path.write_text(table.render(fmt), encoding="utf-8", newline="")
    if fmt == "csv":
        meta = path.with_name(path.name + ".meta.json")
        meta.write_text(table.meta_json(), encoding="utf-8")
        written.append(meta)
    if table.run_info:
        run = path.with_name(path.name + ".run.json")
        run.write_text(json.dumps(_plain(table.run_info), indent=2) + "\n", encoding="utf-8")
        written.append(run)
    return written


def read_csv(path: str | Path) -> ResultTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list] = {h: [] for h in header}
        for row in reader:
            for h, cell in zip(header, row):
                cols[h].append(_parse_cell(cell))
    meta = path.with_name(path.name + ".meta.json")
    metadata = json.loads(meta.read_text()) if meta.exists() else {}
    return ResultTable(cols, metadata)


def read_json(path: str | Path) -> ResultTable:
    payload = json.loads(Path(path).read_text())

    def num(v):
        if isinstance(v, str) and v in ("inf", "-inf", "nan"):
            return float(v)
        return v

    cols = {k: [num(v) for v in col] for k, col in payload["columns"].items()}
    return ResultTable(cols, payload.get("metadata", {}))
