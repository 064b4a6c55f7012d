"""Per-point inputs to the segmenter and the providers that produce them.

A provider stands in for the learned backbone: given a block it returns a
semantic prediction, a center offset and an instance-aware embedding for
every block point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import container as ct
from .container import FormatError
from .partition import Block
from .taxonomy import NO_INSTANCE, AnnotatedPointCloud, BuildingCategory, InvalidInputError, UrbanClass

DEFAULT_EMBEDDING_DIM = 16


class DimensionMismatchError(InvalidInputError):
    pass


@dataclass(frozen=True, eq=False)
class PointFeatures:
    semantic_pred: np.ndarray
    offset: np.ndarray
    embedding: np.ndarray
    category_pred: np.ndarray | None = None
    semantic_scores: np.ndarray | None = None

    def __post_init__(self):
        sem = np.asarray(self.semantic_pred).reshape(-1)
        n = sem.size
        if n and (sem.min() < 0 or sem.max() > max(UrbanClass)):
            raise InvalidInputError("semantic prediction holds an unknown class code")
        off = np.ascontiguousarray(self.offset, dtype=np.float64)
        emb = np.ascontiguousarray(self.embedding, dtype=np.float64)
        if off.shape != (n, 3):
            raise DimensionMismatchError(f"offset has shape {off.shape}, expected ({n}, 3)")
        if emb.ndim != 2 or emb.shape[0] != n or emb.shape[1] < 1:
            raise DimensionMismatchError(f"embedding has shape {emb.shape}, expected ({n}, D>=1)")
        if not (np.all(np.isfinite(off)) and np.all(np.isfinite(emb))):
            raise InvalidInputError("features must be finite")
        cat = self.category_pred
        if cat is not None:
            cat = np.asarray(cat).reshape(-1)
            if cat.size != n:
                raise DimensionMismatchError(f"category_pred has {cat.size} rows, expected {n}")
            if n and (cat.min() < 0 or cat.max() > max(BuildingCategory)):
                raise InvalidInputError("category prediction holds an unknown code")
            cat = cat.astype(np.uint8)
        scores = self.semantic_scores
        if scores is not None:
            scores = np.ascontiguousarray(scores, dtype=np.float64)
            if scores.shape != (n, len(UrbanClass)):
                raise DimensionMismatchError(f"semantic_scores has shape {scores.shape}")
        object.__setattr__(self, "semantic_pred", sem.astype(np.uint8))
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "category_pred", cat)
        object.__setattr__(self, "semantic_scores", scores)

    def __len__(self) -> int:
        return self.semantic_pred.size

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def subset(self, indices) -> PointFeatures:
        idx = np.asarray(indices, dtype=np.int64)
        return PointFeatures(
            self.semantic_pred[idx], self.offset[idx], self.embedding[idx],
            None if self.category_pred is None else self.category_pred[idx],
            None if self.semantic_scores is None else self.semantic_scores[idx],
        )


class FeatureProvider(Protocol):
    def provide(self, block: Block, cloud: AnnotatedPointCloud) -> PointFeatures: ...


def foreground_mask(features: PointFeatures) -> np.ndarray:
    return features.semantic_pred == UrbanClass.BUILDING


def instance_code(rank: int, dim: int) -> np.ndarray:
    """Embedding code of the ``rank``-th instance: ``e_(rank mod dim) * (1 + rank // dim)``."""
    code = np.zeros(dim)
    code[rank % dim] = 1.0 + rank // dim
    return code


def instance_codes(ranks: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((ranks.size, dim))
    out[np.arange(ranks.size), ranks % dim] = 1.0 + ranks // dim
    return out


class OracleProvider:
    """Features derived from ground truth, with optional seeded noise.

    Noise-free output: the true semantic class; offsets pointing from each
    building point to the centroid of its instance within the block (zero
    elsewhere); embeddings equal to :func:`instance_code` of the instance's
    rank among the cloud's instance ids (zero vector for non-building points).
    Noise adds Gaussian jitter to embeddings and offsets and flips semantic
    labels to a uniformly drawn other class with probability
    ``noise_semantic``.
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM, noise_embedding: float = 0.0,
                 noise_offset: float = 0.0, noise_semantic: float = 0.0, seed: int = 0):
        if dim < 1:
            raise InvalidInputError("embedding dimension must be >= 1")
        if min(noise_embedding, noise_offset) < 0 or not 0 <= noise_semantic <= 1:
            raise InvalidInputError("noise levels must be non-negative and flip probability in [0, 1]")
        self.dim = dim
        self.noise_embedding = noise_embedding
        self.noise_offset = noise_offset
        self.noise_semantic = noise_semantic
        self.seed = seed

    def provide(self, block: Block, cloud: AnnotatedPointCloud) -> PointFeatures:
        idx = block.indices
        n = idx.size
        sem = cloud.semantic[idx].astype(np.int64)
        inst = cloud.instance[idx]
        pos = cloud.positions[idx]
        building = inst != NO_INSTANCE

        ids = cloud.instance_ids()
        offset = np.zeros((n, 3))
        emb = np.zeros((n, self.dim))
        if building.any():
            local, inverse = np.unique(inst[building], return_inverse=True)
            sums = np.zeros((local.size, 3))
            np.add.at(sums, inverse, pos[building])
            centroids = sums / np.bincount(inverse)[:, None]
            offset[building] = centroids[inverse] - pos[building]
            ranks = np.searchsorted(ids, local)
            emb[building] = instance_codes(ranks, self.dim)[inverse]

        rng = np.random.default_rng([self.seed, block.block_id])
        if self.noise_semantic > 0:
            flip = rng.random(n) < self.noise_semantic
            shift = rng.integers(1, len(UrbanClass), size=n)
            sem = np.where(flip, (sem + shift) % len(UrbanClass), sem)
        if self.noise_offset > 0:
            offset = offset + rng.normal(0.0, self.noise_offset, size=offset.shape)
        if self.noise_embedding > 0:
            emb = emb + rng.normal(0.0, self.noise_embedding, size=emb.shape)
        return PointFeatures(sem, offset, emb, cloud.category[idx])


# ---------------------------------------------------------------- files

def write_features(features: PointFeatures, path) -> None:
    channels = {"semantic_pred": features.semantic_pred, "offset": features.offset,
                "embedding": features.embedding}
    if features.category_pred is not None:
        channels["category_pred"] = features.category_pred
    if features.semantic_scores is not None:
        channels["semantic_scores"] = features.semantic_scores
    ct.write_container(path, ct.KIND_FEATURES, [ct.Section("points", channels)])


def read_features(path) -> PointFeatures:
    sections = ct.read_container(path, ct.KIND_FEATURES)
    if "points" not in sections:
        raise FormatError("missing section 'points'", path=path, field="points")
    sec = sections["points"]
    sem = ct.require(sec, "semantic_pred", path, 1)[:, 0]
    off = ct.require(sec, "offset", path, 3)
    emb = ct.require(sec, "embedding", path)
    cat = sec.channels.get("category_pred")
    scores = sec.channels.get("semantic_scores")
    try:
        return PointFeatures(sem, off, emb, None if cat is None else cat[:, 0], scores)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path=path) from None


class FileProvider:
    """Features exported by an external network.

    The file covers either the whole cloud (sliced per block) or exactly one
    block's points in block order.
    """

    def __init__(self, path):
        self.path = path
        self._features = read_features(path)

    def provide(self, block: Block, cloud: AnnotatedPointCloud) -> PointFeatures:
        n = len(self._features)
        if n == len(cloud):
            return self._features.subset(block.indices)
        if n == len(block):
            return self._features
        raise DimensionMismatchError(
            f"{self.path}: feature file has {n} points, block {block.block_id} has {len(block)} "
            f"and the cloud {len(cloud)}")
