"""Spatial preprocessing: block cropping, voxel hashing, furthest point sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container as ct
from . import kernels
from .taxonomy import AnnotatedPointCloud, InvalidInputError

DEFAULT_MAX_POINTS = 500_000
DEFAULT_VOXEL_EDGE = 1.0 / 3.0
SPLIT_QUANTILE_RANGE = (0.4, 0.6)


@dataclass(frozen=True, eq=False)
class Block:
    """A spatial crop of a parent cloud: sorted unique point indices plus bounds."""

    block_id: int
    indices: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self) -> int:
        return self.indices.size

    def __eq__(self, other):
        if not isinstance(other, Block):
            return NotImplemented
        return (self.block_id == other.block_id and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper))

    @classmethod
    def whole(cls, cloud: AnnotatedPointCloud, block_id: int = 0) -> Block:
        return _make_block(block_id, np.arange(len(cloud), dtype=np.int64), cloud.positions)


def _make_block(block_id, indices, positions) -> Block:
    idx = np.sort(indices)
    if idx.size:
        pts = positions[idx]
        lower, upper = pts.min(axis=0), pts.max(axis=0)
    else:
        lower = upper = np.zeros(3)
    return Block(block_id, idx, lower, upper)


def crop_blocks(cloud: AnnotatedPointCloud, max_points: int = DEFAULT_MAX_POINTS, seed: int = 0) -> list[Block]:
    """Split ``cloud`` into axis-aligned blocks of at most ``max_points`` points.

    Oversized regions are bisected along their longer horizontal extent. The
    cut sits at a point-count quantile drawn from ``SPLIT_QUANTILE_RANGE``
    with a seeded RNG, so both halves are non-empty and the decomposition is
    reproducible. Blocks are numbered depth-first, lower half first.
    """
    if max_points < 1:
        raise InvalidInputError(f"max_points must be >= 1, got {max_points}")
    n = len(cloud)
    if n == 0:
        return []
    pos = cloud.positions
    rng = np.random.default_rng(seed)
    leaves: list[np.ndarray] = []
    stack = [np.arange(n, dtype=np.int64)]
    while stack:
        idx = stack.pop()
        if idx.size <= max_points:
            leaves.append(idx)
            continue
        pts = pos[idx]
        extent = pts.max(axis=0) - pts.min(axis=0)
        axis = 0 if extent[0] >= extent[1] else 1
        order = np.lexsort((idx, pts[:, axis]))
        q = rng.uniform(*SPLIT_QUANTILE_RANGE)
        cut = min(max(int(round(q * idx.size)), 1), idx.size - 1)
        # push upper first so the lower half is emitted first
        stack.append(idx[order[cut:]])
        stack.append(idx[order[:cut]])
    return [_make_block(i, leaf, pos) for i, leaf in enumerate(leaves)]


def write_blocks(blocks: list[Block], path) -> None:
    """Cache a decomposition: per-member point index and block id, plus block bounds."""
    members = [b.indices for b in blocks]
    owner = [np.full(b.indices.size, b.block_id, dtype=np.int64) for b in blocks]
    ct.write_container(path, ct.KIND_BLOCKS, [
        ct.Section("members", {
            "index": np.concatenate(members) if members else np.zeros(0, dtype=np.int64),
            "block": np.concatenate(owner) if owner else np.zeros(0, dtype=np.int64)}),
        ct.Section("blocks", {
            "id": np.array([b.block_id for b in blocks], dtype=np.int64),
            "lower": np.array([b.lower for b in blocks], dtype=np.float64).reshape(-1, 3),
            "upper": np.array([b.upper for b in blocks], dtype=np.float64).reshape(-1, 3)}),
    ])


def read_blocks(path) -> list[Block]:
    sections = ct.read_container(path, ct.KIND_BLOCKS)
    for name in ("members", "blocks"):
        if name not in sections:
            raise ct.FormatError(f"missing section {name!r}", path=path, field=name)
    mem, bl = sections["members"], sections["blocks"]
    index = ct.require(mem, "index", path)[:, 0].astype(np.int64)
    owner = ct.require(mem, "block", path)[:, 0]
    ids = ct.require(bl, "id", path)[:, 0]
    lower, upper = ct.require(bl, "lower", path, 3), ct.require(bl, "upper", path, 3)
    return [Block(int(b), np.sort(index[owner == b]), lower[i].copy(), upper[i].copy())
            for i, b in enumerate(ids)]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Points hashed into cubic voxels of side ``edge``.

    ``coords[v]`` is the integer coordinate of voxel ``v``; ``point_voxel[i]``
    the voxel holding point ``i``; ``representatives[v]`` its lowest point
    index. Voxels are ordered lexicographically by coordinate.
    """

    edge: float
    coords: np.ndarray
    point_voxel: np.ndarray
    representatives: np.ndarray
    _order: np.ndarray
    _starts: np.ndarray

    def __len__(self) -> int:
        return self.coords.shape[0]

    def members(self, voxel: int) -> np.ndarray:
        return self._order[self._starts[voxel]:self._starts[voxel + 1]]

    def lookup(self, coord) -> int | None:
        """Index of the voxel at integer coordinate ``coord``, or ``None``."""
        key = np.asarray(coord, dtype=np.int64)
        lo, hi = 0, len(self)
        while lo < hi:
            mid = (lo + hi) // 2
            if tuple(self.coords[mid]) < tuple(key):
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self) and np.array_equal(self.coords[lo], key):
            return lo
        return None

    def as_dict(self) -> dict[tuple[int, int, int], np.ndarray]:
        return {tuple(int(x) for x in c): self.members(v) for v, c in enumerate(self.coords)}


def voxel_coords(points, edge: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.floor(pts / edge).astype(np.int64)


def voxelize(points, edge: float = DEFAULT_VOXEL_EDGE) -> VoxelGrid:
    """Hash points into voxels with ``floor(position / edge)`` per axis."""
    if not edge > 0:
        raise InvalidInputError(f"voxel edge must be positive, got {edge}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite coordinate")
    keys = voxel_coords(pts, edge)
    if keys.shape[0] == 0:
        coords, inverse = keys, np.zeros(0, dtype=np.int64)
    else:
        lo = keys.min(axis=0)
        span = keys.max(axis=0) - lo + 1
        if float(span[0]) * float(span[1]) * float(span[2]) < 2.0 ** 62:
            # row-major linear key preserves lexicographic voxel order
            rel = keys - lo
            linear = (rel[:, 0] * span[1] + rel[:, 1]) * span[2] + rel[:, 2]
            uniq, inverse = np.unique(linear, return_inverse=True)
            coords = np.stack([uniq // (span[1] * span[2]), (uniq // span[2]) % span[1], uniq % span[2]],
                              axis=1) + lo
        else:
            coords, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=coords.shape[0])
    starts = np.concatenate([[0], np.cumsum(counts)])
    reps = order[starts[:-1]] if coords.shape[0] else np.zeros(0, dtype=np.int64)
    return VoxelGrid(float(edge), coords.reshape(-1, 3), inverse, reps, order, starts)


def default_fps_start(points) -> int:
    """Lowest index among points with minimal (x, y, z) in lexicographic order."""
    pts = np.asarray(points).reshape(-1, 3)
    order = np.lexsort((np.arange(pts.shape[0]), pts[:, 2], pts[:, 1], pts[:, 0]))
    return int(order[0])


def fps(points, k: int, start: int | None = None, rng: np.random.Generator | None = None,
        return_distances: bool = False):
    """Exact furthest point sampling.

    Each pick maximizes the minimum Euclidean distance to the points already
    picked, ties going to the lowest index. ``start`` defaults to
    :func:`default_fps_start`; passing ``rng`` instead draws it at random.
    With ``return_distances`` the selection distances are returned too
    (``inf`` for the first pick).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    if start is None:
        start = int(rng.integers(n)) if rng is not None else default_fps_start(pts)
    if not 0 <= start < n:
        raise InvalidInputError(f"start index {start} out of range")
    idx, dist = kernels.fps(pts, k, start)
    return (idx, dist) if return_distances else idx
