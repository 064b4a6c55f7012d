"""Little-endian, versioned, sectioned binary container.

Layout (all integers little-endian)::

    magic      8 bytes  b"URBSEGC\\0"
    version    u16      currently 1
    kind       u16      1 cloud, 2 features, 3 result, 4 blocks
    n_sections u32
    section*   name_len u16, name utf-8, n_rows u64, n_channels u32, channel*
    channel*   name_len u16, name utf-8, dtype u8, n_cols u32,
               data: n_cols column blocks of n_rows values each

A section is a table whose channels share a row count. Channel data is
column-major so a ``(rows, cols)`` matrix is written one column at a time.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"URBSEGC\0"
VERSION = 1

KIND_CLOUD = 1
KIND_FEATURES = 2
KIND_RESULT = 3
KIND_BLOCKS = 4

DTYPE_CODES = {
    1: np.dtype("<u1"),
    2: np.dtype("<i4"),
    3: np.dtype("<i8"),
    4: np.dtype("<f4"),
    5: np.dtype("<f8"),
    6: np.dtype("<u4"),
}
_CODE_OF = {dt: code for code, dt in DTYPE_CODES.items()}


class FormatError(ValueError):
    """A malformed file, reported with the byte offset and field at fault."""

    def __init__(self, message: str, *, path=None, offset: int | None = None, field: str | None = None):
        self.path = None if path is None else str(path)
        self.offset = offset
        self.field = field
        where = []
        if self.path:
            where.append(self.path)
        if offset is not None:
            where.append(f"byte {offset}")
        if field:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class Section:
    name: str
    channels: dict[str, np.ndarray]
    offsets: dict[str, int] = field(default_factory=dict)  # byte offset of each channel's data on read

    @property
    def n_rows(self) -> int:
        if not self.channels:
            return 0
        return next(iter(self.channels.values())).shape[0]


def encode(kind: int, sections: list[Section]) -> bytes:
    out = [MAGIC, struct.pack("<HHI", VERSION, kind, len(sections))]
    for sec in sections:
        n_rows = sec.n_rows
        name = sec.name.encode()
        out.append(struct.pack("<H", len(name)) + name)
        out.append(struct.pack("<QI", n_rows, len(sec.channels)))
        for cname, arr in sec.channels.items():
            arr = np.asarray(arr)
            dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("<", "|") else arr.dtype
            if dt not in _CODE_OF:
                raise TypeError(f"unsupported dtype {arr.dtype} for channel {cname}")
            if arr.shape[0] != n_rows:
                raise ValueError(f"channel {cname} has {arr.shape[0]} rows, section {sec.name} has {n_rows}")
            mat = arr.reshape(n_rows, int(np.prod(arr.shape[1:])))
            cbytes = cname.encode()
            out.append(struct.pack("<H", len(cbytes)) + cbytes)
            out.append(struct.pack("<BI", _CODE_OF[dt], mat.shape[1]))
            out.append(np.ascontiguousarray(mat.T, dtype=dt).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"unexpected end of file (need {n} bytes)", path=self.path,
                              offset=self.pos, field=field)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, field: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), field))

    def string(self, field: str) -> str:
        (n,) = self.unpack("<H", field)
        start = self.pos
        try:
            return self.take(n, field).decode()
        except UnicodeDecodeError:
            raise FormatError("name is not valid utf-8", path=self.path, offset=start, field=field) from None


def decode(buf: bytes, path=None) -> tuple[int, list[Section]]:
    r = _Reader(buf, path)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad magic number", path=path, offset=0, field="magic")
    version, kind, n_sections = r.unpack("<HHI", "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=len(MAGIC), field="version")
    sections = []
    for _ in range(n_sections):
        sname = r.string("section.name")
        n_rows, n_channels = r.unpack("<QI", f"{sname}.header")
        channels: dict[str, np.ndarray] = {}
        offsets: dict[str, int] = {}
        for _ in range(n_channels):
            cname = r.string(f"{sname}.channel.name")
            at = r.pos
            code, n_cols = r.unpack("<BI", f"{sname}.{cname}")
            if code not in DTYPE_CODES:
                raise FormatError(f"unknown dtype code {code}", path=path, offset=at, field=f"{sname}.{cname}")
            dt = DTYPE_CODES[code]
            offsets[cname] = r.pos
            raw = r.take(n_rows * n_cols * dt.itemsize, f"{sname}.{cname}")
            mat = np.frombuffer(raw, dtype=dt).reshape(n_cols, n_rows).T.astype(dt.newbyteorder("="))
            channels[cname] = np.ascontiguousarray(mat)
        sections.append(Section(sname, channels, offsets))
    if r.pos != len(buf):
        raise FormatError("trailing bytes after last section", path=path, offset=r.pos, field="eof")
    return kind, sections


def write_container(path, kind: int, sections: list[Section]) -> None:
    data = encode(kind, sections)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_container(path, expected_kind: int | None = None) -> dict[str, Section]:
    with open(path, "rb") as fh:
        buf = fh.read()
    kind, sections = decode(buf, path)
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"file kind {kind}, expected {expected_kind}", path=path,
                          offset=len(MAGIC) + 2, field="kind")
    return {s.name: s for s in sections}


def require(section: Section, name: str, path=None, cols: int | None = None) -> np.ndarray:
    if name not in section.channels:
        raise FormatError(f"missing channel {name!r} in section {section.name!r}", path=path, field=name)
    arr = section.channels[name]
    if cols is not None and arr.shape[1] != cols:
        raise FormatError(f"channel {name!r} has {arr.shape[1]} columns, expected {cols}", path=path, field=name)
    return arr
