import struct

import numpy as np
import pytest

from nsbl.fields import GridSpec, VectorField
from nsbl.nsf import read_compact, read_field, write_compact, write_field


def random_field(n=8, seed=0):
    rng = np.random.default_rng(seed)
    return VectorField(GridSpec(n, 3.0), physical=rng.standard_normal((3, n, n, n)))


def test_round_trip_is_bitwise(tmp_path):
    u = random_field()
    p = tmp_path / "u.nsf"
    write_field(p, u)
    v = read_field(p)
    assert v.grid == u.grid
    assert np.array_equal(v.physical, u.physical)


def test_layout_header_and_x_fastest(tmp_path):
    u = random_field(n=4)
    p = tmp_path / "u.nsf"
    write_field(p, u)
    data = p.read_bytes()
    assert data[:4] == b"NSF1"
    n, length = struct.unpack_from("<Id", data, 4)
    assert (n, length) == (4, 3.0)
    first = struct.unpack_from("<4d", data, 16)
    assert first == tuple(u.physical[0, :, 0, 0])
    # next block along y, then the second component after n^3 values
    assert struct.unpack_from("<d", data, 16 + 8 * 4)[0] == u.physical[0, 0, 1, 0]
    assert struct.unpack_from("<d", data, 16 + 8 * 64)[0] == u.physical[1, 0, 0, 0]
    assert len(data) == 16 + 8 * 3 * 64


def test_corrupt_files_rejected(tmp_path):
    u = random_field(n=4)
    p = tmp_path / "u.nsf"
    write_field(p, u)
    raw = p.read_bytes()
    (tmp_path / "magic.nsf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        read_field(tmp_path / "magic.nsf")
    (tmp_path / "short.nsf").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="size"):
        read_field(tmp_path / "short.nsf")


def test_compact_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((5, 5, 5))
    p = tmp_path / "c.nsf"
    write_compact(p, 5, 0.25, 0.5, vals)
    n, h, radius, back = read_compact(p)
    assert (n, h, radius) == (5, 0.25, 0.5)
    assert np.array_equal(back[0], vals)
    assert not back[1:].any()
    with pytest.raises(ValueError):
        write_compact(p, 4, 0.25, 0.5, vals)


def test_write_is_atomic_on_failure(tmp_path, monkeypatch):
    u = random_field(n=4)
    p = tmp_path / "u.nsf"
    write_field(p, u)
    before = p.read_bytes()
    import os
    monkeypatch.setattr(os, "replace", lambda *a: (_ for _ in ()).throw(OSError("disk full")))
    with pytest.raises(OSError):
        write_field(p, random_field(n=4, seed=9))
    assert p.read_bytes() == before
    assert [f.name for f in tmp_path.iterdir()] == ["u.nsf"]
