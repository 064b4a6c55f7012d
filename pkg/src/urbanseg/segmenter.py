"""Clustering-free building proposals from per-point features.

Per block: pick candidate points among the foreground by furthest point
sampling, assign every foreground point to the candidate nearest in
embedding space, merge candidates whose offset-shifted positions lie close
together, then score the merged proposals and drop the weak ones.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .features import PointFeatures, foreground_mask
from .partition import Block, fps
from .scoring import GeometricScorer, Scorer
from .taxonomy import AnnotatedPointCloud, BuildingCategory, InvalidInputError, Proposal

UNASSIGNED = -1
CANDIDATE_SPACES = ("shifted", "positions")


@dataclass(frozen=True)
class SegmenterParams:
    """Tunables of the proposal pipeline.

    ``candidate_space`` selects the coordinates furthest point sampling runs
    on: ``"shifted"`` (position + predicted offset) or raw ``"positions"``.
    ``random_start`` seeds the sampling start from ``seed`` instead of the
    lexicographically smallest point.
    """

    k_ratio: int = 3000
    k_max: int = 100
    merge_radius: float = 1.0
    score_threshold: float = 0.1
    candidate_space: str = "shifted"
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.k_ratio < 1 or self.k_max < 1:
            raise InvalidInputError("k_ratio and k_max must be positive")
        if not self.merge_radius > 0:
            raise InvalidInputError(f"merge_radius must be positive, got {self.merge_radius}")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise InvalidInputError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        if self.candidate_space not in CANDIDATE_SPACES:
            raise InvalidInputError(f"candidate_space must be one of {CANDIDATE_SPACES}")


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    """Block-local instance labels (proposal id or ``UNASSIGNED``) and proposals."""

    instance: np.ndarray
    proposals: list[Proposal] = field(default_factory=list)

    def __len__(self) -> int:
        return self.instance.size

    def canonical(self) -> np.ndarray:
        return canonical_labels(self.instance)

    def __eq__(self, other):
        if not isinstance(other, SegmentationResult):
            return NotImplemented
        if not np.array_equal(self.instance, other.instance) or len(self.proposals) != len(other.proposals):
            return False
        return all(np.array_equal(a.members, b.members) and np.array_equal(a.anchor, b.anchor)
                   and a.score == b.score and a.category == b.category
                   for a, b in zip(self.proposals, other.proposals))


def canonical_labels(labels) -> np.ndarray:
    """Relabel a partition by order of first appearance; negatives stay ``UNASSIGNED``."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, UNASSIGNED, dtype=np.int64)
    valid = labels >= 0
    if valid.any():
        uniq, first, inverse = np.unique(labels[valid], return_index=True, return_inverse=True)
        rank = np.empty(uniq.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(uniq.size)
        out[valid] = rank[inverse.reshape(-1)]
    return out


def candidate_count(n_foreground: int, k_ratio: int = 3000, k_max: int = 100) -> int:
    """One candidate per ``k_ratio`` foreground points, rounded up, at most ``k_max``."""
    if n_foreground <= 0:
        return 0
    return min(k_max, max(1, -(-n_foreground // k_ratio)))


def select_candidates(foreground, positions, k_ratio: int = 3000, k_max: int = 100,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Pick candidate points by furthest point sampling over ``positions[foreground]``.

    Returns indices into ``positions`` in selection order.
    """
    fg = np.asarray(foreground, dtype=np.int64).reshape(-1)
    k = candidate_count(fg.size, k_ratio, k_max)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)[fg]
    return fg[fps(pts, k, rng=rng)]


def _embedding_pair(fg_embeddings, cand_embeddings):
    a = np.asarray(fg_embeddings, dtype=np.float64)
    b = np.asarray(cand_embeddings, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"embedding shapes {a.shape} and {b.shape} do not share a dimension")
    if b.shape[0] < 1:
        raise InvalidInputError("at least one candidate is required")
    return a, b


def build_relation_matrix(fg_embeddings, cand_embeddings) -> np.ndarray:
    """Euclidean embedding distance between every foreground point and candidate."""
    return kernels.relation_matrix(*_embedding_pair(fg_embeddings, cand_embeddings))


def assign(matrix) -> np.ndarray:
    """Nearest candidate per row, lowest candidate index on ties."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[1] == 0:
        raise InvalidInputError("relation matrix needs at least one candidate column")
    return np.argmin(m, axis=1)


def assign_nearest(fg_embeddings, cand_embeddings) -> np.ndarray:
    """``assign(build_relation_matrix(...))`` without holding the matrix in memory."""
    labels, _ = kernels.nearest_candidate(*_embedding_pair(fg_embeddings, cand_embeddings))
    return labels


def single_linkage(points, radius: float) -> np.ndarray:
    """Cluster labels joining any two points at distance ``<= radius`` (transitively).

    Clusters are numbered by their lowest member index.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if n > 1:
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
        for i, j in zip(*np.nonzero(np.triu(d <= radius, k=1))):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)], dtype=np.int64)
    return canonical_labels(roots)


def majority_category(categories) -> BuildingCategory:
    counts = np.bincount(np.asarray(categories, dtype=np.int64), minlength=len(BuildingCategory))
    return BuildingCategory(int(np.argmax(counts)))


def merge_candidates(cand_positions, cand_offsets, assignment, foreground, merge_radius: float = 1.0,
                     category_pred=None) -> list[Proposal]:
    """Merge candidates whose anchors (position + offset) chain within ``merge_radius``.

    ``assignment[i]`` is the candidate slot of foreground point
    ``foreground[i]``. Each anchor cluster becomes one proposal holding the
    union of its candidates' points, anchored at the mean of their anchors.
    Clusters that received no points are dropped. ``category_pred`` (indexed
    like the block) decides the proposal category by majority vote.
    """
    if not merge_radius > 0:
        raise InvalidInputError(f"merge_radius must be positive, got {merge_radius}")
    anchors = np.asarray(cand_positions, dtype=np.float64) + np.asarray(cand_offsets, dtype=np.float64)
    cluster = single_linkage(anchors, merge_radius)
    fg = np.asarray(foreground, dtype=np.int64)
    point_cluster = cluster[np.asarray(assignment, dtype=np.int64)]
    order = np.argsort(point_cluster, kind="stable")
    bounds = np.searchsorted(point_cluster[order], np.arange(cluster.max() + 2 if cluster.size else 1))
    proposals = []
    for c in range(cluster.max() + 1 if cluster.size else 0):
        members = fg[order[bounds[c]:bounds[c + 1]]]
        if members.size == 0:
            continue
        slots = np.flatnonzero(cluster == c)
        cat = (BuildingCategory.UNLABELED if category_pred is None
               else majority_category(np.asarray(category_pred)[members]))
        proposals.append(Proposal(members, anchors[slots].mean(axis=0), 1.0, cat,
                                  tuple(int(s) for s in slots)))
    return proposals


def score_and_filter(proposals: list[Proposal], scorer, n_points: int, threshold: float = 0.1,
                     positions=None, features: PointFeatures | None = None) -> SegmentationResult:
    """Score proposals and keep those scoring at least ``threshold``.

    ``scorer`` is a :class:`~urbanseg.scoring.Scorer` or a precomputed score
    sequence. Survivors are renumbered in their original order; points of
    dropped proposals stay ``UNASSIGNED``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold}")
    if callable(scorer):
        scores = np.asarray(scorer(proposals, positions, features), dtype=np.float64)
    else:
        scores = np.asarray(scorer, dtype=np.float64)
    if scores.shape != (len(proposals),):
        raise InvalidInputError(f"got {scores.size} scores for {len(proposals)} proposals")
    instance = np.full(n_points, UNASSIGNED, dtype=np.int64)
    kept = []
    for p, s in zip(proposals, scores):
        if s < threshold:
            continue
        instance[p.members] = len(kept)
        kept.append(p.with_score(float(np.clip(s, 0.0, 1.0))))
    return SegmentationResult(instance, kept)


def propose(positions, features: PointFeatures, candidates, merge_radius: float = 1.0) -> list[Proposal]:
    """Group the foreground around the given candidates and merge them.

    Candidates are taken in ascending point order, so embedding ties resolve
    to the lowest point index whatever order the candidates arrive in.
    """
    fg = np.flatnonzero(foreground_mask(features))
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    if fg.size == 0 or cand.size == 0:
        return []
    labels = assign_nearest(features.embedding[fg], features.embedding[cand])
    return merge_candidates(np.asarray(positions)[cand], features.offset[cand], labels, fg,
                            merge_radius, features.category_pred)


def segment_block(cloud: AnnotatedPointCloud, block: Block, features: PointFeatures,
                  params: SegmenterParams | None = None, scorer: Scorer | None = None,
                  timings: dict[str, float] | None = None) -> SegmentationResult:
    """Run the full proposal pipeline on one block.

    Results are indexed block-locally: ``result.instance[i]`` belongs to
    ``cloud`` point ``block.indices[i]``. Stage wall-clock seconds are added
    to ``timings`` when given.
    """
    params = params or SegmenterParams()
    scorer = scorer or GeometricScorer()
    clock = _Clock(timings)
    n = len(block)
    if len(features) != n:
        raise InvalidInputError(f"features cover {len(features)} points, block {block.block_id} has {n}")
    positions = cloud.positions[block.indices]
    fg = np.flatnonzero(foreground_mask(features))
    if fg.size == 0:
        return SegmentationResult(np.full(n, UNASSIGNED, dtype=np.int64), [])
    space = positions + features.offset if params.candidate_space == "shifted" else positions
    rng = np.random.default_rng([params.seed, block.block_id]) if params.random_start else None
    with clock("select"):
        cand = np.unique(select_candidates(fg, space, params.k_ratio, params.k_max, rng=rng))
    with clock("group"):
        labels = assign_nearest(features.embedding[fg], features.embedding[cand])
    with clock("merge"):
        proposals = merge_candidates(positions[cand], features.offset[cand], labels, fg,
                                     params.merge_radius, features.category_pred)
    with clock("score"):
        return score_and_filter(proposals, scorer, n, params.score_threshold, positions, features)


class _Clock:
    def __init__(self, sink):
        self.sink = sink

    @contextmanager
    def __call__(self, stage):
        start = time.perf_counter()
        try:
            yield
        finally:
            if self.sink is not None:
                self.sink[stage] = self.sink.get(stage, 0.0) + time.perf_counter() - start
