"""Domain types shared across the package: label taxonomies and point clouds.

The integer codes of every enumeration are frozen; they are written verbatim
into cloud, feature and result files (see FORMAT.md).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

NO_INSTANCE = -1
"""Instance id carried by every non-building point."""

LOW_RISE_LIMIT_M = 24.0
HIGH_RISE_LIMIT_M = 100.0


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class UrbanClass(IntEnum):
    GROUND = 0
    WATER = 1
    BOAT = 2
    VEGETATION = 3
    BRIDGE = 4
    VEHICLE = 5
    BUILDING = 6


class BuildingCategory(IntEnum):
    COMMERCIAL = 0
    RESIDENTIAL = 1
    OFFICE = 2
    CULTURAL = 3
    TRANSPORTATION = 4
    MUNICIPAL = 5
    TEMPORARY = 6
    UNLABELED = 7

    @classmethod
    def labeled(cls) -> list[BuildingCategory]:
        return [c for c in cls if c is not cls.UNLABELED]


class HeightClass(IntEnum):
    LOW_RISE = 0
    HIGH_RISE = 1
    SUPER_HIGH_RISE = 2


def classify_height(height_m: float) -> HeightClass:
    """Bin a building height in meters.

    Below 24 m is low-rise, above 100 m is super high-rise, and the closed
    interval [24, 100] is high-rise.
    """
    h = float(height_m)
    if not np.isfinite(h) or h < 0:
        raise InvalidInputError(f"height must be a finite non-negative number, got {height_m!r}")
    if h < LOW_RISE_LIMIT_M:
        return HeightClass.LOW_RISE
    if h <= HIGH_RISE_LIMIT_M:
        return HeightClass.HIGH_RISE
    return HeightClass.SUPER_HIGH_RISE


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _codes(values, limit: int, what: str) -> np.ndarray:
    raw = np.asarray(values).reshape(-1)
    if raw.size and (raw.min() < 0 or raw.max() > limit):
        bad = raw[(raw < 0) | (raw > limit)][0]
        raise InvalidInputError(f"unknown {what} code {bad}")
    return np.ascontiguousarray(raw, dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class AnnotatedPointCloud:
    """Points with color and urban / building-level annotations.

    Arrays are stored read-only; ``positions`` is ``(N, 3)`` float64,
    ``colors`` ``(N, 3)`` uint8 and the three label channels ``(N,)``.
    """

    positions: np.ndarray
    colors: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    category: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = pos.shape[0]
        col = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        sem = _codes(self.semantic, max(UrbanClass), "urban class")
        ins = np.ascontiguousarray(self.instance, dtype=np.int64).reshape(-1)
        cat = _codes(self.category, max(BuildingCategory), "building category")
        for name, arr in (("colors", col), ("semantic", sem), ("instance", ins), ("category", cat)):
            if arr.shape[0] != n:
                raise InvalidInputError(f"channel {name} has {arr.shape[0]} rows, expected {n}")
        building = sem == UrbanClass.BUILDING
        if np.any((ins == NO_INSTANCE) == building):
            raise InvalidInputError("instance must be NO_INSTANCE exactly on non-building points")
        if np.any(ins < NO_INSTANCE):
            raise InvalidInputError("instance ids must be non-negative")
        for name, arr in (("positions", pos), ("colors", col), ("semantic", sem),
                          ("instance", ins), ("category", cat)):
            object.__setattr__(self, name, _frozen(arr))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AnnotatedPointCloud):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("positions", "colors", "semantic", "instance", "category")
        )

    @classmethod
    def empty(cls) -> AnnotatedPointCloud:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), np.uint8), np.zeros(0, np.uint8),
                   np.zeros(0, np.int64), np.zeros(0, np.uint8))

    def subset(self, indices) -> AnnotatedPointCloud:
        idx = np.asarray(indices, dtype=np.int64)
        return AnnotatedPointCloud(self.positions[idx], self.colors[idx], self.semantic[idx],
                                   self.instance[idx], self.category[idx])

    def instance_ids(self) -> np.ndarray:
        """Sorted unique real instance ids."""
        ids = np.unique(self.instance)
        return ids[ids != NO_INSTANCE]


@dataclass(frozen=True, eq=False)
class Proposal:
    """A candidate building instance inside one block.

    ``members`` are sorted block-local point indices and ``anchor`` the
    offset-shifted representative position.
    """

    members: np.ndarray
    anchor: np.ndarray
    score: float = 1.0
    category: BuildingCategory = BuildingCategory.UNLABELED
    candidates: tuple[int, ...] = field(default=())

    def __post_init__(self):
        members = np.unique(np.asarray(self.members, dtype=np.int64))
        if members.size == 0:
            raise InvalidInputError("a proposal needs at least one member point")
        if members[0] < 0:
            raise InvalidInputError("member indices must be non-negative")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "members", _frozen(members))
        object.__setattr__(self, "anchor", _frozen(np.asarray(self.anchor, dtype=np.float64).reshape(3)))
        object.__setattr__(self, "category", BuildingCategory(self.category))

    def __len__(self) -> int:
        return self.members.size

    def with_score(self, score: float) -> Proposal:
        return Proposal(self.members, self.anchor, float(score), self.category, self.candidates)
