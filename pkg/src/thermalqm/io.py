"""Serialization of states, frequency tables and tabular results.

Complex matrices are written as ``{"dim": N, "entries": [[re, im], ...]}``
in row-major order.  CSV files always carry a header row and a sidecar
``.schema.json`` describing the columns.  Floats are written with
``repr`` so identical numbers give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tomography import EXACT, FrequencyTable


def matrix_to_json(m) -> dict:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    return {"dim": int(m.shape[0]), "entries": [[float(z.real), float(z.imag)] for z in m.ravel()]}


def matrix_from_json(doc: dict) -> np.ndarray:
    try:
        dim = int(doc["dim"])
        entries = doc["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError("state document needs 'dim' and 'entries'") from exc
    if len(entries) != dim * dim or any(len(e) != 2 for e in entries):
        raise ValueError(f"expected {dim * dim} [re, im] pairs")
    return np.array([complex(re, im) for re, im in entries]).reshape(dim, dim)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


@dataclass
class Table:
    """Columns are ``(name, type, description)`` triples."""

    columns: list[tuple[str, str, str]]
    rows: list[tuple] = field(default_factory=list)

    def schema(self) -> dict:
        return {"format": "csv", "header": True,
                "columns": [{"name": n, "type": t, "description": d} for n, t, d in self.columns]}

    def write(self, path: Path) -> list[Path]:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([c[0] for c in self.columns])
            for row in self.rows:
                if len(row) != len(self.columns):
                    raise ValueError(f"row has {len(row)} cells, table has {len(self.columns)} columns")
                w.writerow([_cell(x) for x in row])
        schema_path = path.with_suffix(".schema.json")
        write_json(schema_path, self.schema())
        return [path, schema_path]


def write_json(path: Path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


FREQUENCY_COLUMNS = [
    ("test-index", "int", "position of the test in the canonical suite"),
    ("frequency", "float", "observed pass frequency (exact probability when sample-size is inf)"),
    ("sample-size", "float", "number of repetitions; inf marks exact probabilities"),
]


def frequency_table(table: FrequencyTable) -> Table:
    return Table(FREQUENCY_COLUMNS, [(i, v, n) for i, (v, n) in enumerate(zip(table.values, table.sample_sizes))])


def read_frequency_table(path: Path) -> FrequencyTable:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != [c[0] for c in FREQUENCY_COLUMNS]:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        rows = sorted(reader, key=lambda r: int(r["test-index"]))
    values = [float(r["frequency"]) for r in rows]
    sizes = tuple(EXACT if r["sample-size"] == "inf" else float(r["sample-size"]) for r in rows)
    return FrequencyTable(np.array(values), sizes)
