import json

import numpy as np
import pytest

from ibtopo.errors import ConfigError
from ibtopo.geometry import CartesianGrid
from ibtopo.io import (read_snapshot, read_trace, stencil_record, write_snapshot,
                       write_stencil_dump, write_trace)
from ibtopo.stencils import DerivativeSpec, interior_stencil


def test_snapshot_round_trip_is_bit_identical(tmp_path):
    g = CartesianGrid((7, 5), (0.5, 2.0), (1.0, -3.0))
    vals = np.random.default_rng(0).standard_normal(g.shape)
    vals[0, 0] = -0.0
    vals[1, 1] = 5e-324
    write_snapshot(tmp_path / "a.snap", vals, g, "p", 0.125)
    header, back = read_snapshot(tmp_path / "a.snap")
    assert back.tobytes() == vals.tobytes()
    assert header == {"field": "p", "time": 0.125, "dims": [7, 5], "spacing": [0.5, 2.0],
                      "origin": [1.0, -3.0], "dtype": "f64le", "layout": "row-major"}


def test_snapshot_layout(tmp_path):
    g = CartesianGrid((4, 5), (1.0, 1.0))
    vals = np.arange(20.0).reshape(4, 5)
    write_snapshot(tmp_path / "b.snap", vals, g, "vx", 1.0)
    raw = (tmp_path / "b.snap").read_bytes()
    lines = raw.split(b"\n", 2)
    assert lines[0] == b"SNAP1"
    assert json.loads(lines[1])["field"] == "vx"
    assert np.frombuffer(lines[2], "<f8").tolist() == list(range(20))


def test_snapshot_errors(tmp_path):
    g = CartesianGrid((4, 5), (1.0, 1.0))
    with pytest.raises(ConfigError):
        write_snapshot(tmp_path / "c.snap", np.zeros((5, 4)), g, "p", 0.0)
    (tmp_path / "bad.snap").write_bytes(b"SNAP2\n{}\n")
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "bad.snap")
    write_snapshot(tmp_path / "d.snap", np.zeros((4, 5)), g, "p", 0.0)
    (tmp_path / "d.snap").write_bytes((tmp_path / "d.snap").read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "d.snap")


def test_trace_round_trip(tmp_path):
    t = [0.0, 0.1, 0.2]
    v = [1.0, -2.5e-17, 1 / 3]
    write_trace(tmp_path / "t.csv", t, v)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,value"
    tt, vv = read_trace(tmp_path / "t.csv")
    assert tt.tolist() == t and vv.tolist() == v
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace(tmp_path / "x.csv")


def test_stencil_record(tmp_path):
    st = interior_stencil(DerivativeSpec.along("p", 0, 2, 2), 2, (1.0, 1.0))
    rec = stencil_record(st, "d2p/dx2")
    assert rec["forcing"] == 0.0 and rec["operator"] == "d2p/dx2"
    assert sorted((t["offset"], t["weight"]) for t in rec["taps"]) == [([-1, 0], 1.0), ([0, 0], -2.0),
                                                                     ([1, 0], 1.0)]
    write_stencil_dump(tmp_path / "s.json", [rec])
    assert json.loads((tmp_path / "s.json").read_text()) == [rec]
    assert "operator" not in stencil_record(st)
