"""Proposal scorers.

A scorer maps ``(proposals, block positions, features)`` to one score in
``[0, 1]`` per proposal. A learned scorer can be slotted in by implementing
the same call signature.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from .taxonomy import NO_INSTANCE


class Scorer(Protocol):
    def __call__(self, proposals, positions, features) -> np.ndarray: ...


class GeometricScorer:
    """Label-free score ``coverage * compactness``.

    coverage: members / (members + points of other proposals inside the
    member bounding box). compactness: share of members whose distance to
    the anchor is at most ``spread`` times the median such distance.
    """

    def __init__(self, spread: float = 2.0):
        self.spread = spread

    def __call__(self, proposals, positions, features=None) -> np.ndarray:
        pos = np.asarray(positions, dtype=np.float64)
        if not proposals:
            return np.zeros(0)
        lows = np.array([pos[p.members].min(axis=0) for p in proposals])
        highs = np.array([pos[p.members].max(axis=0) for p in proposals])
        scores = np.empty(len(proposals))
        for i, p in enumerate(proposals):
            pts = pos[p.members]
            intruders = 0
            overlap = np.all((lows <= highs[i]) & (highs >= lows[i]), axis=1)
            overlap[i] = False
            for j in np.flatnonzero(overlap):
                other = pos[proposals[j].members]
                intruders += int(np.count_nonzero(np.all((other >= lows[i]) & (other <= highs[i]), axis=1)))
            coverage = p.members.size / (p.members.size + intruders)
            dist = np.linalg.norm(pts - p.anchor, axis=1)
            compactness = float(np.mean(dist <= self.spread * np.median(dist)))
            scores[i] = min(max(coverage * compactness, 0.0), 1.0)
        return scores


class GroundTruthScorer:
    """Score = best IoU of the proposal with any ground-truth instance of the block."""

    def __init__(self, instance):
        self.instance = np.asarray(instance, dtype=np.int64)

    def __call__(self, proposals, positions=None, features=None) -> np.ndarray:
        gt = self.instance
        ids, sizes = np.unique(gt[gt != NO_INSTANCE], return_counts=True)
        size_of = dict(zip(ids.tolist(), sizes.tolist()))
        scores = np.zeros(len(proposals))
        for i, p in enumerate(proposals):
            labels = gt[p.members]
            labels = labels[labels != NO_INSTANCE]
            if labels.size == 0:
                continue
            hit_ids, inter = np.unique(labels, return_counts=True)
            union = p.members.size + np.array([size_of[h] for h in hit_ids.tolist()]) - inter
            scores[i] = float(np.max(inter / union))
        return scores
