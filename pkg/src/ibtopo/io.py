"""Snapshot, trace and stencil-dump files.

Snapshots are an ASCII line ``SNAP1``, one line of JSON header and then the
raw little-endian float64 payload in row-major order.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import CartesianGrid
from .stencils import ModifiedStencil

MAGIC = b"SNAP1"


def write_snapshot(path: str | Path, values: np.ndarray, grid: CartesianGrid, field: str,
                   time: float) -> None:
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ConfigError(f"snapshot of shape {values.shape} does not match grid {grid.shape}", "snapshot")
    header = {"field": field, "time": float(time), "dims": list(grid.shape),
              "spacing": list(map(float, grid.spacing)), "origin": list(map(float, grid.origin)),
              "dtype": "f64le", "layout": "row-major"}
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(payload)


def read_snapshot(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.readline().rstrip(b"\n") != MAGIC:
            raise ValueError(f"{path} is not a SNAP1 file")
        header = json.loads(fh.readline())
        data = fh.read()
    if header.get("dtype") != "f64le" or header.get("layout") != "row-major":
        raise ValueError(f"{path}: unsupported dtype/layout")
    dims = tuple(header["dims"])
    arr = np.frombuffer(data, dtype="<f8")
    if arr.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload holds {arr.size} values, header says {dims}")
    return header, arr.reshape(dims).astype(np.float64)


def write_trace(path: str | Path, times: Sequence[float], values: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "value"]:
        raise ValueError(f"{path}: missing 't,value' header")
    data = np.array(rows[1:], dtype=float).reshape(-1, 2)
    return data[:, 0], data[:, 1]


def stencil_record(st: ModifiedStencil, operator: str | None = None) -> dict:
    rec = {"index": list(st.index) if st.index is not None else None,
           "taps": [{"field": t.field, "offset": list(t.offset), "weight": t.weight} for t in st.taps],
           "forcing": st.forcing}
    if operator is not None:
        rec["operator"] = operator
    return rec


def write_stencil_dump(path: str | Path, records: Iterable[dict]) -> None:
    Path(path).write_text(json.dumps(list(records), indent=1) + "\n")
