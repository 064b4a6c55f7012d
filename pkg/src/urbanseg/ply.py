"""Minimal PLY reader/writer with the extra per-vertex label properties.

Point clouds use one ``vertex`` element with ``x y z`` (double),
``red green blue`` (uchar) and the integer properties ``semantic`` (uchar),
``instance`` (int) and ``category`` (uchar). Meshes add a ``face`` element
with a ``vertex_indices`` list and the same three label properties per face.
Both ``ascii`` and ``binary_little_endian``/``binary_big_endian`` bodies are
read; writing defaults to little-endian binary.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .container import FormatError

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_PLY_NAME = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort", "i4": "int",
             "u4": "uint", "f4": "float", "f8": "double"}


@dataclass
class Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class Element:
    name: str
    count: int
    header_offset: int
    properties: list[Property] = field(default_factory=list)

    def prop(self, name: str) -> Property | None:
        return next((p for p in self.properties if p.name == name), None)


def _parse_header(buf: bytes, path):
    if not buf.startswith(b"ply"):
        raise FormatError("missing 'ply' magic", path=path, offset=0, field="magic")
    end = buf.find(b"end_header")
    if end < 0:
        raise FormatError("missing end_header", path=path, offset=0, field="header")
    nl = buf.find(b"\n", end)
    if nl < 0:
        raise FormatError("truncated header", path=path, offset=end, field="header")
    body_start = nl + 1
    fmt = None
    elements: list[Element] = []
    offset = 0
    for raw in buf[:body_start].split(b"\n"):
        line_at = offset
        offset += len(raw) + 1
        words = raw.decode("ascii", errors="replace").strip().split()
        if not words or words[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if words[0] == "format":
            if len(words) < 3 or words[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise FormatError(f"unsupported format line {raw!r}", path=path, offset=line_at, field="format")
            fmt = words[1]
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise FormatError(f"malformed element line {raw!r}", path=path, offset=line_at, field="element")
            elements.append(Element(words[1], int(words[2]), line_at))
        elif words[0] == "property":
            if not elements:
                raise FormatError("property before any element", path=path, offset=line_at, field="property")
            if len(words) == 5 and words[1] == "list":
                if words[2] not in PLY_TYPES or words[3] not in PLY_TYPES:
                    raise FormatError(f"unknown list type in {raw!r}", path=path, offset=line_at, field=words[4])
                elements[-1].properties.append(Property(words[4], PLY_TYPES[words[3]], PLY_TYPES[words[2]]))
            elif len(words) == 3 and words[1] in PLY_TYPES:
                elements[-1].properties.append(Property(words[2], PLY_TYPES[words[1]]))
            else:
                raise FormatError(f"malformed property line {raw!r}", path=path, offset=line_at,
                                  field=words[-1] if len(words) > 1 else "property")
        else:
            raise FormatError(f"unexpected header keyword {words[0]!r}", path=path, offset=line_at, field="header")
    if fmt is None:
        raise FormatError("missing format line", path=path, offset=0, field="format")
    return fmt, elements, body_start


def _read_binary(buf, pos, el: Element, endian: str, path):
    lists = [p for p in el.properties if p.count_dtype is not None]
    if not lists:
        dt = np.dtype([(p.name, endian + p.dtype) for p in el.properties])
        size = dt.itemsize * el.count
        if pos + size > len(buf):
            raise FormatError(f"element {el.name!r} truncated", path=path, offset=pos, field=el.name)
        return np.frombuffer(buf, dtype=dt, count=el.count, offset=pos), pos + size
    # list properties: only fixed-length triangle lists are supported
    fields = []
    for p in el.properties:
        if p.count_dtype is None:
            fields.append((p.name, endian + p.dtype))
        else:
            fields.append((p.name + "__count", endian + p.count_dtype))
            fields.append((p.name, endian + p.dtype, (3,)))
    dt = np.dtype(fields)
    size = dt.itemsize * el.count
    if pos + size > len(buf):
        raise FormatError(f"element {el.name!r} truncated", path=path, offset=pos, field=el.name)
    arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=pos)
    for p in lists:
        bad = np.flatnonzero(arr[p.name + "__count"] != 3)
        if bad.size:
            raise FormatError("only triangular faces are supported", path=path,
                              offset=pos + int(bad[0]) * dt.itemsize, field=p.name)
    return arr, pos + size


def _read_ascii(buf, pos, el: Element, path):
    fields = []
    for p in el.properties:
        fields.append((p.name, p.dtype) if p.count_dtype is None else (p.name, p.dtype, (3,)))
    out = np.zeros(el.count, dtype=np.dtype(fields))
    for row in range(el.count):
        nl = buf.find(b"\n", pos)
        if nl < 0:
            nl = len(buf)
        if pos >= len(buf):
            raise FormatError(f"element {el.name!r} truncated at row {row}", path=path, offset=pos, field=el.name)
        tokens = buf[pos:nl].split()
        t = 0
        try:
            for p in el.properties:
                if p.count_dtype is None:
                    out[p.name][row] = _scalar(tokens[t], p.dtype)
                    t += 1
                else:
                    n = int(tokens[t])
                    if n != 3:
                        raise FormatError("only triangular faces are supported", path=path, offset=pos, field=p.name)
                    out[p.name][row] = [int(x) for x in tokens[t + 1:t + 4]]
                    t += 4
        except (IndexError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad value in row {row} of {el.name!r}", path=path, offset=pos,
                              field=el.properties[min(t, len(el.properties) - 1)].name) from None
        pos = nl + 1
    return out, pos


def _scalar(token: bytes, dtype: str):
    if dtype[0] == "f":
        return float(token)
    return int(token)


def read_ply(path) -> dict[str, tuple[Element, np.ndarray, int]]:
    """Parse a PLY file into ``{element: (header, structured array, body offset)}``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    fmt, elements, pos = _parse_header(buf, path)
    out = {}
    for el in elements:
        start = pos
        if fmt == "ascii":
            arr, pos = _read_ascii(buf, pos, el, path)
        else:
            arr, pos = _read_binary(buf, pos, el, "<" if fmt == "binary_little_endian" else ">", path)
        out[el.name] = (el, arr, start)
    return out


def write_ply(path, elements: list[tuple[str, dict[str, np.ndarray]]], ascii: bool = False) -> None:
    """Write elements given as ``(name, {property: array})``.

    A 2-D ``(n, 3)`` integer array is written as a ``uchar``-counted list.
    """
    header = ["ply", f"format {'ascii' if ascii else 'binary_little_endian'} 1.0"]
    bodies = []
    for name, props in elements:
        n = len(next(iter(props.values()))) if props else 0
        header.append(f"element {name} {n}")
        fields = []
        for pname, arr in props.items():
            arr = np.asarray(arr)
            code = arr.dtype.str[1:]
            if code not in _PLY_NAME:
                raise TypeError(f"unsupported PLY dtype {arr.dtype} for {pname}")
            if arr.ndim == 2:
                header.append(f"property list uchar {_PLY_NAME[code]} {pname}")
                fields.append((pname + "__count", "u1"))
                fields.append((pname, "<" + code, (arr.shape[1],)))
            else:
                header.append(f"property {_PLY_NAME[code]} {pname}")
                fields.append((pname, "<" + code))
        rec = np.zeros(n, dtype=np.dtype(fields))
        for pname, arr in props.items():
            arr = np.asarray(arr)
            rec[pname] = arr
            if arr.ndim == 2:
                rec[pname + "__count"] = arr.shape[1]
        bodies.append(rec)
    header.append("end_header")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for rec in bodies:
            if ascii:
                for row in rec:
                    fh.write((" ".join(_fmt(v) for v in row) + "\n").encode("ascii"))
            else:
                fh.write(rec.tobytes())
    os.replace(tmp, path)


def _fmt(v) -> str:
    if isinstance(v, np.ndarray):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(int(v))
