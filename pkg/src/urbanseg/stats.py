"""Scene statistics: class tallies, building category/height counts, correlations."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .taxonomy import (NO_INSTANCE, AnnotatedPointCloud, BuildingCategory, HeightClass, InvalidInputError,
                       UrbanClass, classify_height)


class UndefinedCorrelationError(ValueError):
    """Correlation requested for a constant count vector."""


def _zeros(enum) -> dict[str, int]:
    return {m.name: 0 for m in enum}


@dataclass
class SceneSummary:
    name: str
    class_points: dict[str, int] = field(default_factory=lambda: _zeros(UrbanClass))
    category_buildings: dict[str, int] = field(default_factory=lambda: _zeros(BuildingCategory))
    height_buildings: dict[str, int] = field(default_factory=lambda: _zeros(HeightClass))
    total_points: int = 0
    n_buildings: int = 0
    area_km2: float | None = None

    def category_vector(self) -> np.ndarray:
        """Building counts of the seven labeled categories in code order."""
        return np.array([self.category_buildings.get(c.name, 0) for c in BuildingCategory.labeled()],
                        dtype=np.float64)

    def to_dict(self) -> dict:
        return {"name": self.name, "class_points": dict(self.class_points),
                "category_buildings": dict(self.category_buildings),
                "height_buildings": dict(self.height_buildings), "total_points": self.total_points,
                "n_buildings": self.n_buildings, "area_km2": self.area_km2}

    @classmethod
    def from_dict(cls, d: dict) -> SceneSummary:
        """Build from a dict; missing tallies default to zero and enum keys are validated."""
        out = cls(str(d["name"]))
        for attr, enum in (("class_points", UrbanClass), ("category_buildings", BuildingCategory),
                           ("height_buildings", HeightClass)):
            given = d.get(attr, {}) or {}
            unknown = set(given) - {m.name for m in enum}
            if unknown:
                raise InvalidInputError(f"{attr}: unknown keys {sorted(unknown)}")
            target = getattr(out, attr)
            for k, v in given.items():
                target[k] = int(v)
        out.total_points = int(d.get("total_points", sum(out.class_points.values())))
        labeled = sum(out.category_buildings.values())
        out.n_buildings = int(d.get("n_buildings", labeled))
        out.area_km2 = d.get("area_km2")
        return out


def summarize(cloud: AnnotatedPointCloud, name: str = "scene", area_km2: float | None = None) -> SceneSummary:
    """Tally points per class and buildings per category and height class.

    A building's category is the majority over its points; its height is its
    vertical extent (max z minus min z).
    """
    s = SceneSummary(name, area_km2=area_km2)
    counts = np.bincount(cloud.semantic, minlength=len(UrbanClass))
    for c in UrbanClass:
        s.class_points[c.name] = int(counts[c])
    s.total_points = len(cloud)
    building = np.flatnonzero(cloud.instance != NO_INSTANCE)
    if building.size == 0:
        return s
    ids, inverse = np.unique(cloud.instance[building], return_inverse=True)
    inverse = inverse.reshape(-1)
    z = cloud.positions[building, 2]
    zmax = np.full(ids.size, -np.inf)
    zmin = np.full(ids.size, np.inf)
    np.maximum.at(zmax, inverse, z)
    np.minimum.at(zmin, inverse, z)
    votes = np.zeros((ids.size, len(BuildingCategory)), dtype=np.int64)
    np.add.at(votes, (inverse, cloud.category[building].astype(np.int64)), 1)
    for cat, height in zip(np.argmax(votes, axis=1), zmax - zmin):
        s.category_buildings[BuildingCategory(int(cat)).name] += 1
        s.height_buildings[classify_height(height).name] += 1
    s.n_buildings = int(ids.size)
    return s


def long_tail(summary: SceneSummary) -> list[tuple[UrbanClass, int]]:
    """Urban classes by descending point count, class code breaking ties."""
    items = [(c, int(summary.class_points.get(c.name, 0))) for c in UrbanClass]
    return sorted(items, key=lambda item: (-item[1], int(item[0])))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidInputError("pearson needs two equal-length vectors of at least two entries")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def scene_correlation(a: SceneSummary, b: SceneSummary) -> float:
    """Pearson correlation of two scenes' building counts over the seven categories."""
    try:
        return pearson(a.category_vector(), b.category_vector())
    except UndefinedCorrelationError:
        flat = a.name if np.ptp(a.category_vector()) == 0 else b.name
        raise UndefinedCorrelationError(
            f"scene {flat!r} has identical building counts in every category") from None


def correlation_matrix(summaries: list[SceneSummary]) -> np.ndarray:
    n = len(summaries)
    out = np.eye(n)
    for i in range(n):
        if n == 1:
            # a lone scene is still checked for a defined correlation with itself
            scene_correlation(summaries[0], summaries[0])
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = scene_correlation(summaries[i], summaries[j])
    return out


def matrix_csv(names: list[str], matrix: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + names)
    for name, row in zip(names, matrix):
        w.writerow([name] + [f"{v:.6f}" for v in row])
    return buf.getvalue()


def summaries_csv(summaries: list[SceneSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ([f"points_{c.name}" for c in UrbanClass] + [f"buildings_{c.name}" for c in BuildingCategory]
            + [f"height_{h.name}" for h in HeightClass])
    w.writerow(["name", "total_points", "n_buildings"] + cols)
    for s in summaries:
        w.writerow([s.name, s.total_points, s.n_buildings]
                   + [s.class_points[c.name] for c in UrbanClass]
                   + [s.category_buildings[c.name] for c in BuildingCategory]
                   + [s.height_buildings[h.name] for h in HeightClass])
    return buf.getvalue()


def load_summaries(path) -> list[SceneSummary]:
    """Read one summary object or a list of them from JSON."""
    with open(path) as fh:
        data = json.load(fh)
    items = data if isinstance(data, list) else data.get("scenes", [data])
    return [SceneSummary.from_dict(d) for d in items]


def render_tables(summaries: list[SceneSummary], matrix: np.ndarray | None) -> str:
    names = [s.name for s in summaries]
    width = max([10] + [len(n) for n in names]) + 2
    lines = ["Points per class"]
    lines.append("".ljust(16) + "".join(n.rjust(width) for n in names))
    for c in UrbanClass:
        lines.append(c.name.title().ljust(16) + "".join(str(s.class_points[c.name]).rjust(width) for s in summaries))
    lines.append("Total".ljust(16) + "".join(str(s.total_points).rjust(width) for s in summaries))
    lines.append("")
    lines.append("Buildings per category / height")
    heads = ["Co", "Re", "Of", "Cu", "Tr", "Mu", "Te", "L", "H", "SH"]
    lines.append("Scene".ljust(width) + "".join(h.rjust(6) for h in heads))
    for s in summaries:
        vals = [s.category_buildings[c.name] for c in BuildingCategory.labeled()]
        vals += [s.height_buildings[h.name] for h in HeightClass]
        lines.append(s.name.ljust(width) + "".join(str(v).rjust(6) for v in vals))
    if matrix is not None:
        lines.append("")
        lines.append("Correlation")
        lines.append("".ljust(width) + "".join(n.rjust(width) for n in names))
        for name, row in zip(names, matrix):
            lines.append(name.ljust(width) + "".join(f"{v:.2f}".rjust(width) for v in row))
    return "\n".join(lines)
