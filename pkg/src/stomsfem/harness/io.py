"""Artifact writers. Files are byte-reproducible for a fixed config and seed."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..fem_core import read_nodal_csv, write_nodal_csv
from ..mesh import StructuredGrid

ERRORS_HEADER = ["method", "N", "error"]


def write_field(path, grid: StructuredGrid, values: np.ndarray) -> Path:
    """``x,y,value`` rows in row-major node order."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    write_nodal_csv(p, grid, values)
    return p


def read_field(path) -> np.ndarray:
    return read_nodal_csv(path)[:, 2]


def write_errors(path, rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERRORS_HEADER)
        for method, n, err in rows:
            w.writerow([method, int(n), repr(float(err))])
    return p


def read_errors(path) -> list[tuple[str, int, float]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [(m, int(n), float(e)) for m, n, e in r]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, data: dict) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return p


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
