import numpy as np
import pytest

from conftest import random_field

from bmlab.bmf import MAGIC, decode_field, encode_field, read_field, read_series, write_field, write_series
from bmlab.errors import InvalidField, ShapeError
from bmlab.spectral_core import FieldSeries, GridSpec


def test_round_trip_is_bit_exact(tmp_path, grid3, rng):
    u = random_field(grid3, rng, comps=3)
    path = tmp_path / "u.bmf"
    write_field(path, u, {"note": "x"})
    v = read_field(path)
    assert v.grid == u.grid
    assert np.array_equal(v.values, u.values)
    _, header = decode_field(path.read_bytes())
    assert header["components"] == 3 and header["note"] == "x"


def test_encoding_is_deterministic(grid2, rng):
    u = random_field(grid2, rng)
    assert encode_field(u) == encode_field(u)
    assert encode_field(u).startswith(MAGIC)


def test_corrupt_files_are_rejected(grid2, rng):
    blob = encode_field(random_field(grid2, rng))
    with pytest.raises(InvalidField):
        decode_field(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ShapeError):
        decode_field(blob[:-8])


def test_series_round_trip(tmp_path):
    grid = GridSpec(2, 16)
    times = np.array([0.0, 0.5, 1.0])
    vals = np.random.default_rng(1).standard_normal((3, 2) + grid.shape)
    write_series(tmp_path / "s", FieldSeries(grid, times, vals))
    s = read_series(tmp_path / "s")
    assert np.array_equal(s.values, vals)
    assert np.array_equal(s.times, times)
