"""BMF1 binary field format.

Layout: 8-byte magic ``b"BMFLD1\\0\\0"``, a 4-byte little-endian header
length, a UTF-8 JSON header ``{n, N, L, components, layout, ...}`` and the
raw little-endian float64 values in row-major order (component axis first).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidField, ShapeError
from .spectral_core import FieldSeries, GridSpec, PhysicalField

MAGIC = b"BMFLD1\0\0"


def encode_field(u: PhysicalField, extra=None) -> bytes:
    header = {**u.grid.to_dict(), "components": u.components, "layout": "row-major"}
    if extra:
        header.update(extra)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + data


def decode_field(blob: bytes):
    """Return ``(PhysicalField, header)`` from BMF1 bytes."""
    if blob[:8] != MAGIC:
        raise InvalidField("not a BMF1 file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidField(f"corrupt BMF1 header: {exc}") from exc
    if header.get("layout") != "row-major":
        raise InvalidField(f"unsupported layout {header.get('layout')!r}")
    grid = GridSpec(int(header["n"]), int(header["N"]), float(header["L"]))
    comps = int(header["components"])
    payload = blob[12 + hlen:]
    expected = comps * grid.N ** grid.n * 8
    if len(payload) != expected:
        raise ShapeError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape((comps,) + grid.shape)
    return PhysicalField(grid, values), header


def write_field(path, u: PhysicalField, extra=None):
    Path(path).write_bytes(encode_field(u, extra))


def read_field(path):
    return decode_field(Path(path).read_bytes())[0]


def write_series(directory, series: FieldSeries, extra=None):
    """Write one BMF1 file per snapshot plus an ``index.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(len(series)):
        name = f"snap_{i:05d}.bmf"
        write_field(d / name, series.snapshot(i), {"t": float(series.times[i])})
        names.append(name)
    index = {"times": [float(t) for t in series.times], "dt": series.dt, "files": names}
    if extra:
        index.update(extra)
    (d / "index.json").write_text(json.dumps(index, sort_keys=True, indent=1))
    return d / "index.json"


def read_series(directory):
    d = Path(directory)
    index = json.loads((d / "index.json").read_text())
    fields = [read_field(d / name) for name in index["files"]]
    grid = fields[0].grid
    return FieldSeries(grid, np.array(index["times"]), np.stack([f.values for f in fields]))
