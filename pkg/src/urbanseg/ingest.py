"""Point-cloud file IO and area-weighted point sampling of labelled meshes."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container as ct
from .container import FormatError
from .ply import read_ply, write_ply
from .taxonomy import (NO_INSTANCE, AnnotatedPointCloud, BuildingCategory, InvalidInputError,
                       UrbanClass, _codes)

DEFAULT_DENSITY = 80.0
DEFAULT_GRAY = 128
SAMPLE_CHUNK = 4096  # triangles per RNG stream


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Labelled triangle mesh: labels live on triangles, colors on vertices."""

    vertices: np.ndarray
    triangles: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    category: np.ndarray
    vertex_colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = t.shape[0]
        sem = _codes(self.semantic, max(UrbanClass), "urban class")
        ins = np.ascontiguousarray(self.instance, dtype=np.int64).reshape(-1)
        cat = _codes(self.category, max(BuildingCategory), "building category")
        if not (sem.size == ins.size == cat.size == n):
            raise InvalidInputError("per-triangle label arrays must match the triangle count")
        if n and (t.min() < 0 or t.max() >= v.shape[0]):
            raise InvalidInputError("triangle index out of range")
        if np.any((ins == NO_INSTANCE) == (sem == UrbanClass.BUILDING)):
            raise InvalidInputError("instance must be NO_INSTANCE exactly on non-building triangles")
        colors = self.vertex_colors
        if colors is not None:
            colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 3)
            if colors.shape[0] != v.shape[0]:
                raise InvalidInputError("vertex_colors must have one row per vertex")
        for name, arr in (("vertices", v), ("triangles", t), ("semantic", sem), ("instance", ins),
                          ("category", cat), ("vertex_colors", colors)):
            object.__setattr__(self, name, arr)

    def areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def allocate_counts(expected: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of per-triangle expected counts.

    The total is ``floor(sum + 0.5)``; leftover points go to the largest
    fractional parts, lowest index first on ties.
    """
    expected = np.asarray(expected, dtype=np.float64)
    if expected.size == 0:
        return np.zeros(0, dtype=np.int64)
    total = int(np.floor(expected.sum() + 0.5))
    base = np.floor(expected).astype(np.int64)
    remaining = total - int(base.sum())
    if remaining > 0:
        frac = expected - base
        order = np.argsort(-frac, kind="stable")
        base[order[:remaining]] += 1
    return base


def _sample_chunk(mesh: TriangleMesh, tri: np.ndarray, counts: np.ndarray, seed: int, first: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, first])))
    owner = np.repeat(tri, counts)
    uv = rng.random((owner.size, 2))
    u, v = uv[:, 0].copy(), uv[:, 1].copy()
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    corners = mesh.triangles[owner]
    a = mesh.vertices[corners[:, 0]]
    b = mesh.vertices[corners[:, 1]]
    c = mesh.vertices[corners[:, 2]]
    pos = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    if mesh.vertex_colors is None:
        col = np.full((owner.size, 3), DEFAULT_GRAY, dtype=np.uint8)
    else:
        vc = mesh.vertex_colors.astype(np.float64)
        w0 = (1.0 - u - v)[:, None]
        mix = w0 * vc[corners[:, 0]] + u[:, None] * vc[corners[:, 1]] + v[:, None] * vc[corners[:, 2]]
        col = np.clip(np.floor(mix + 0.5), 0, 255).astype(np.uint8)
    return pos, col, owner


def sample_mesh(mesh: TriangleMesh, density: float = DEFAULT_DENSITY, seed: int = 0,
                workers: int | None = 1) -> AnnotatedPointCloud:
    """Sample points uniformly over the mesh surface at ``density`` points/m².

    Per-triangle counts are area-proportional with largest-remainder rounding,
    so the total is exactly ``round(density * total_area)``. Points inherit the
    triangle labels and barycentrically interpolated vertex colors (gray when
    the mesh has none).

    Triangles are processed in fixed chunks, each with its own RNG stream
    seeded by ``(seed, first triangle index)``; the output is the same for
    any ``workers`` count.
    """
    density = float(density)
    if not np.isfinite(density) or density <= 0:
        raise InvalidInputError(f"density must be positive, got {density}")
    if not np.all(np.isfinite(mesh.vertices)):
        raise InvalidInputError("mesh has non-finite vertex coordinates")
    n_tri = mesh.triangles.shape[0]
    if n_tri == 0:
        return AnnotatedPointCloud.empty()
    counts = allocate_counts(density * mesh.areas())
    starts = range(0, n_tri, SAMPLE_CHUNK)

    def run(first):
        sl = slice(first, min(first + SAMPLE_CHUNK, n_tri))
        return _sample_chunk(mesh, np.arange(sl.start, sl.stop), counts[sl], seed, first)

    if workers == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    pos = np.concatenate([p[0] for p in parts])
    col = np.concatenate([p[1] for p in parts])
    owner = np.concatenate([p[2] for p in parts])
    return AnnotatedPointCloud(pos, col, mesh.semantic[owner], mesh.instance[owner], mesh.category[owner])


# ---------------------------------------------------------------- cloud IO

def _is_ply(path) -> bool:
    return Path(path).suffix.lower() == ".ply"


def write_cloud(cloud: AnnotatedPointCloud, path, ascii: bool = False) -> None:
    """Write ``cloud`` as PLY (``.ply`` suffix) or as the binary container."""
    if _is_ply(path):
        if len(cloud) and cloud.instance.max() > np.iinfo(np.int32).max:
            raise InvalidInputError("instance ids beyond int32 cannot be stored in PLY")
        write_ply(path, [("vertex", {
            "x": cloud.positions[:, 0], "y": cloud.positions[:, 1], "z": cloud.positions[:, 2],
            "red": cloud.colors[:, 0], "green": cloud.colors[:, 1], "blue": cloud.colors[:, 2],
            "semantic": cloud.semantic, "instance": cloud.instance.astype(np.int32),
            "category": cloud.category,
        })], ascii=ascii)
        return
    ct.write_container(path, ct.KIND_CLOUD, [ct.Section("points", {
        "positions": cloud.positions, "colors": cloud.colors, "semantic": cloud.semantic,
        "instance": cloud.instance, "category": cloud.category,
    })])


_CLOUD_CHANNELS = {"positions": (3, np.float64), "colors": (3, np.uint8), "semantic": (1, np.uint8),
                   "instance": (1, np.int64), "category": (1, np.uint8)}


def _check_codes(values: np.ndarray, limit: int, name: str, path, offset_of) -> None:
    bad = np.flatnonzero(values > limit)
    if bad.size:
        row = int(bad[0])
        raise FormatError(f"unknown {name} code {int(values[row])} at row {row}", path=path,
                          offset=offset_of(row), field=name)


def read_cloud(path) -> AnnotatedPointCloud:
    """Read a cloud written by :func:`write_cloud` (format chosen by suffix)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if _is_ply(path):
        return _read_cloud_ply(path)
    sections = ct.read_container(path, ct.KIND_CLOUD)
    if "points" not in sections:
        raise FormatError("missing section 'points'", path=path, field="points")
    sec = sections["points"]
    arrays = {}
    for name, (cols, dtype) in _CLOUD_CHANNELS.items():
        arr = ct.require(sec, name, path, cols)
        if arr.dtype != dtype:
            raise FormatError(f"channel {name!r} has dtype {arr.dtype}, expected {np.dtype(dtype)}",
                              path=path, offset=sec.offsets.get(name), field=name)
        arrays[name] = arr if cols > 1 else arr[:, 0]
    for name, limit in (("semantic", max(UrbanClass)), ("category", max(BuildingCategory))):
        start = sec.offsets[name]
        _check_codes(arrays[name], limit, name, path, lambda row, s=start: s + row)
    try:
        return AnnotatedPointCloud(**arrays)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path=path, offset=sec.offsets.get("instance"), field="instance") from None


def _read_cloud_ply(path) -> AnnotatedPointCloud:
    elements = read_ply(path)
    if "vertex" not in elements:
        raise FormatError("missing element 'vertex'", path=path, field="vertex")
    el, rec, start = elements["vertex"]
    for name in ("x", "y", "z", "red", "green", "blue", "semantic", "instance", "category"):
        if el.prop(name) is None:
            raise FormatError(f"missing vertex property {name!r}", path=path, offset=el.header_offset, field=name)
    itemsize = rec.dtype.itemsize

    def offset_of(row, name):
        return start + row * itemsize + rec.dtype.fields[name][1]

    sem = rec["semantic"].astype(np.int64)
    cat = rec["category"].astype(np.int64)
    for name, values, limit in (("semantic", sem, max(UrbanClass)), ("category", cat, max(BuildingCategory))):
        if values.size and values.min() < 0:
            row = int(np.flatnonzero(values < 0)[0])
            raise FormatError(f"negative {name} code at row {row}", path=path, offset=offset_of(row, name), field=name)
        _check_codes(values, limit, name, path, lambda row, n=name: offset_of(row, n))
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    col = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.uint8)
    try:
        return AnnotatedPointCloud(pos, col, sem, rec["instance"].astype(np.int64), cat)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path=path, offset=start, field="instance") from None


# ---------------------------------------------------------------- mesh IO

def write_mesh(mesh: TriangleMesh, path, ascii: bool = False) -> None:
    vertex = {"x": mesh.vertices[:, 0], "y": mesh.vertices[:, 1], "z": mesh.vertices[:, 2]}
    if mesh.vertex_colors is not None:
        vertex.update(red=mesh.vertex_colors[:, 0], green=mesh.vertex_colors[:, 1], blue=mesh.vertex_colors[:, 2])
    face = {"vertex_indices": mesh.triangles.astype(np.int32), "semantic": mesh.semantic,
            "instance": mesh.instance.astype(np.int32), "category": mesh.category}
    write_ply(path, [("vertex", vertex), ("face", face)], ascii=ascii)


def read_mesh(path) -> TriangleMesh:
    """Read a labelled triangle mesh from PLY.

    ``face`` needs ``vertex_indices`` and ``semantic``; ``instance`` and
    ``category`` are optional for meshes without building faces.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    elements = read_ply(path)
    for name in ("vertex", "face"):
        if name not in elements:
            raise FormatError(f"missing element {name!r}", path=path, field=name)
    vel, vrec, _ = elements["vertex"]
    fel, frec, fstart = elements["face"]
    for name in ("x", "y", "z"):
        if vel.prop(name) is None:
            raise FormatError(f"missing vertex property {name!r}", path=path, offset=vel.header_offset, field=name)
    for name in ("vertex_indices", "semantic"):
        if fel.prop(name) is None:
            raise FormatError(f"missing face property {name!r}", path=path, offset=fel.header_offset, field=name)
    n = frec.shape[0]
    sem = frec["semantic"].astype(np.int64)
    building = sem == UrbanClass.BUILDING
    if fel.prop("instance") is None:
        if building.any():
            raise FormatError("building faces present but face property 'instance' missing", path=path,
                              offset=fel.header_offset, field="instance")
        ins = np.full(n, NO_INSTANCE, dtype=np.int64)
    else:
        ins = frec["instance"].astype(np.int64)
    if fel.prop("category") is None:
        cat = np.full(n, BuildingCategory.UNLABELED, dtype=np.int64)
    else:
        cat = frec["category"].astype(np.int64)
    colors = None
    if all(vel.prop(c) is not None for c in ("red", "green", "blue")):
        colors = np.stack([vrec["red"], vrec["green"], vrec["blue"]], axis=1)
    for name, values, limit in (("semantic", sem, max(UrbanClass)), ("category", cat, max(BuildingCategory))):
        bad = np.flatnonzero((values < 0) | (values > limit))
        if bad.size:
            raise FormatError(f"unknown {name} code {int(values[bad[0]])} at face {int(bad[0])}", path=path,
                              offset=fstart, field=name)
    try:
        return TriangleMesh(np.stack([vrec["x"], vrec["y"], vrec["z"]], axis=1), frec["vertex_indices"],
                            sem, ins, cat, colors)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path=path, offset=fstart, field="face") from None
