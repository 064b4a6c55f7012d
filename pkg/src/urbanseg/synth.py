"""Desk-scale synthetic urban scenes: box buildings on a ground plane.

Buildings are open-bottom boxes laid out on a jittered grid with a guaranteed
clear gap between neighbours; vegetation blobs (octahedra) and vehicles
(small boxes) sit in the gaps. The labelled mesh is then point-sampled.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .ingest import TriangleMesh, sample_mesh
from .taxonomy import NO_INSTANCE, AnnotatedPointCloud, BuildingCategory, InvalidInputError, UrbanClass

CLASS_COLORS = {
    UrbanClass.GROUND: (120, 110, 95), UrbanClass.WATER: (40, 80, 160), UrbanClass.VEGETATION: (50, 140, 60),
    UrbanClass.VEHICLE: (200, 40, 40), UrbanClass.BUILDING: (190, 185, 175),
}


@dataclass(frozen=True)
class SynthSpec:
    n_buildings: int = 20
    density: float = 20.0
    footprint: tuple[float, float] = (8.0, 20.0)
    height: tuple[float, float] = (5.0, 40.0)
    gap: float = 6.0
    n_vegetation: int = 10
    n_vehicles: int = 10
    tower_fraction: float = 0.0

    def __post_init__(self):
        if self.n_buildings < 0 or self.n_vegetation < 0 or self.n_vehicles < 0:
            raise InvalidInputError("object counts must be non-negative")
        if not self.density > 0:
            raise InvalidInputError("density must be positive")
        if not (0 < self.footprint[0] <= self.footprint[1] and 0 < self.height[0] <= self.height[1]):
            raise InvalidInputError("size ranges must be positive and ordered")
        if self.gap < 2.0:
            raise InvalidInputError("gap must be at least 2 m so buildings stay separable")
        if not 0.0 <= self.tower_fraction <= 1.0:
            raise InvalidInputError("tower_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown synth spec keys {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def load(cls, path) -> SynthSpec:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


class _MeshBuilder:
    def __init__(self):
        self.vertices, self.colors, self.triangles = [], [], []
        self.semantic, self.instance, self.category = [], [], []
        self._nv = 0

    def add(self, verts, tris, sem, inst=NO_INSTANCE, cat=BuildingCategory.UNLABELED):
        verts = np.asarray(verts, dtype=np.float64)
        self.vertices.append(verts)
        self.colors.append(np.tile(CLASS_COLORS.get(sem, (128, 128, 128)), (len(verts), 1)))
        self.triangles.append(np.asarray(tris, dtype=np.int64) + self._nv)
        self._nv += len(verts)
        m = len(tris)
        self.semantic.append(np.full(m, int(sem)))
        self.instance.append(np.full(m, int(inst)))
        self.category.append(np.full(m, int(cat)))

    def add_box(self, lo, hi, sem, inst=NO_INSTANCE, cat=BuildingCategory.UNLABELED):
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        v = [(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
             (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)]
        walls = [(0, 1, 5), (0, 5, 4), (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)]
        roof = [(4, 5, 6), (4, 6, 7)]
        self.add(v, walls + roof, sem, inst, cat)

    def add_blob(self, center, radius, sem):
        cx, cy, cz = center
        v = [(cx + radius, cy, cz), (cx - radius, cy, cz), (cx, cy + radius, cz), (cx, cy - radius, cz),
             (cx, cy, cz + radius), (cx, cy, cz - radius)]
        t = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4), (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
        self.add(v, t, sem)

    def build(self) -> TriangleMesh:
        if not self.vertices:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64), [], [], [])
        return TriangleMesh(np.concatenate(self.vertices), np.concatenate(self.triangles),
                            np.concatenate(self.semantic), np.concatenate(self.instance),
                            np.concatenate(self.category), np.concatenate(self.colors))


def build_scene_mesh(spec: SynthSpec, seed: int = 0) -> TriangleMesh:
    """Labelled mesh of the scene; building ``i`` gets instance id ``i + 1``."""
    rng = np.random.default_rng(seed)
    cell = spec.footprint[1] + spec.gap
    cols = max(1, math.ceil(math.sqrt(max(spec.n_buildings, 1))))
    rows = max(1, math.ceil(max(spec.n_buildings, 1) / cols))
    width, depth = cols * cell, rows * cell
    b = _MeshBuilder()
    b.add([(0, 0, 0), (width, 0, 0), (width, depth, 0), (0, depth, 0)], [(0, 1, 2), (0, 2, 3)], UrbanClass.GROUND)
    labeled = BuildingCategory.labeled()
    for i in range(spec.n_buildings):
        r, c = divmod(i, cols)
        sx, sy = rng.uniform(*spec.footprint, size=2)
        # keep half the gap on every side of the cell
        x0 = c * cell + spec.gap / 2 + rng.uniform(0, spec.footprint[1] - sx)
        y0 = r * cell + spec.gap / 2 + rng.uniform(0, spec.footprint[1] - sy)
        tall = rng.random() < spec.tower_fraction
        h = rng.uniform(100.0, 150.0) if tall else rng.uniform(*spec.height)
        cat = labeled[int(rng.integers(len(labeled)))]
        b.add_box((x0, y0, 0.0), (x0 + sx, y0 + sy, h), UrbanClass.BUILDING, i + 1, cat)
    # clutter lives on the cell borders, inside the gaps
    for _ in range(spec.n_vegetation):
        gx, gy = rng.integers(cols + 1), rng.uniform(0, depth)
        radius = rng.uniform(0.5, min(1.5, spec.gap / 2 - 0.2))
        b.add_blob((gx * cell, gy, radius), radius, UrbanClass.VEGETATION)
    for _ in range(spec.n_vehicles):
        gy, gx = rng.integers(rows + 1), rng.uniform(0, width - 4.5)
        half = min(0.9, spec.gap / 2 - 0.2)
        b.add_box((gx, gy * cell - half, 0.0), (gx + 4.5, gy * cell + half, 1.5), UrbanClass.VEHICLE)
    return b.build()


def synthesize(spec: SynthSpec | None = None, seed: int = 0) -> AnnotatedPointCloud:
    spec = spec or SynthSpec()
    return sample_mesh(build_scene_mesh(spec, seed), spec.density, seed)
