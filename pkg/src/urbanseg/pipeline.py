"""Scene driver: crop into blocks, fetch features, segment blocks on a worker pool."""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import container as ct
from .config import PipelineConfig
from .container import FormatError
from .features import FeatureProvider, FileProvider, OracleProvider
from .partition import Block, crop_blocks, voxelize
from .scoring import GeometricScorer, GroundTruthScorer
from .segmenter import UNASSIGNED, SegmentationResult, segment_block
from .taxonomy import AnnotatedPointCloud, BuildingCategory

RESULT_VERSION = 1


@dataclass
class BlockRun:
    block: Block
    result: SegmentationResult
    timings: dict[str, float] = field(default_factory=dict)
    n_voxels: int = 0


@dataclass
class SceneResult:
    """Scene-level labels; proposal ids are unique across blocks."""

    instance: np.ndarray
    block_of: np.ndarray
    proposal_id: np.ndarray
    proposal_block: np.ndarray
    score: np.ndarray
    category: np.ndarray
    point_count: np.ndarray
    anchor: np.ndarray
    runs: list[BlockRun] = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return self.instance.size

    def scores_by_id(self) -> dict[int, float]:
        return dict(zip(self.proposal_id.tolist(), self.score.tolist()))

    def categories_by_id(self) -> dict[int, int]:
        return dict(zip(self.proposal_id.tolist(), self.category.tolist()))


def make_provider(cfg: PipelineConfig) -> FeatureProvider:
    if cfg.features == "oracle":
        return OracleProvider(cfg.dim, cfg.noise_embedding, cfg.noise_offset, cfg.noise_semantic, cfg.seed)
    return FileProvider(cfg.features[len("file:"):])


def run_block(cloud, block, provider, cfg: PipelineConfig) -> BlockRun:
    timings: dict[str, float] = {}
    start = time.perf_counter()
    feats = provider.provide(block, cloud)
    timings["features"] = time.perf_counter() - start
    scorer = GroundTruthScorer(cloud.instance[block.indices]) if cfg.scorer == "gt" else GeometricScorer()
    result = segment_block(cloud, block, feats, cfg.segmenter_params(), scorer, timings)
    n_voxels = len(voxelize(cloud.positions[block.indices], cfg.voxel_edge)) if len(block) else 0
    timings["total"] = time.perf_counter() - start
    return BlockRun(block, result, timings, n_voxels)


def segment_scene(cloud: AnnotatedPointCloud, cfg: PipelineConfig | None = None,
                  provider: FeatureProvider | None = None) -> SceneResult:
    """Segment every block of ``cloud``; output order follows block id whatever the pool does."""
    cfg = cfg or PipelineConfig()
    provider = provider or make_provider(cfg)
    blocks = crop_blocks(cloud, cfg.max_points, cfg.seed)
    workers = cfg.workers or os.cpu_count() or 1
    if workers == 1 or len(blocks) <= 1:
        runs = [run_block(cloud, b, provider, cfg) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda b: run_block(cloud, b, provider, cfg), blocks))
    return assemble(len(cloud), runs)


def assemble(n_points: int, runs: list[BlockRun]) -> SceneResult:
    instance = np.full(n_points, UNASSIGNED, dtype=np.int64)
    block_of = np.full(n_points, -1, dtype=np.int64)
    pid, pblock, score, cat, count, anchor = [], [], [], [], [], []
    next_id = 0
    for run in sorted(runs, key=lambda r: r.block.block_id):
        idx = run.block.indices
        block_of[idx] = run.block.block_id
        local = run.result.instance
        instance[idx] = np.where(local >= 0, local + next_id, UNASSIGNED)
        for p in run.result.proposals:
            pid.append(next_id)
            pblock.append(run.block.block_id)
            score.append(p.score)
            cat.append(int(p.category))
            count.append(p.members.size)
            anchor.append(p.anchor)
            next_id += 1
    return SceneResult(instance, block_of, np.array(pid, dtype=np.int64), np.array(pblock, dtype=np.int64),
                       np.array(score, dtype=np.float64), np.array(cat, dtype=np.uint8),
                       np.array(count, dtype=np.int64), np.array(anchor, dtype=np.float64).reshape(-1, 3), runs)


# ---------------------------------------------------------------- result files

def write_result(res: SceneResult, path) -> None:
    ct.write_container(path, ct.KIND_RESULT, [
        ct.Section("points", {"instance": res.instance, "block": res.block_of}),
        ct.Section("proposals", {"id": res.proposal_id, "block": res.proposal_block, "score": res.score,
                                 "category": res.category, "point_count": res.point_count,
                                 "anchor": res.anchor}),
    ])


def result_json(res: SceneResult, cfg: PipelineConfig | None = None) -> str:
    doc = {
        "version": RESULT_VERSION,
        "n_points": res.n_points,
        "n_blocks": len(res.runs) if res.runs else int(res.block_of.max() + 1 if res.n_points else 0),
        "proposals": [
            {"id": int(i), "block": int(b), "score": float(s), "category": BuildingCategory(int(c)).name,
             "category_code": int(c), "point_count": int(n), "anchor": [float(x) for x in a]}
            for i, b, s, c, n, a in zip(res.proposal_id, res.proposal_block, res.score, res.category,
                                        res.point_count, res.anchor)
        ],
    }
    if cfg is not None:
        doc["config"] = {k: v for k, v in vars(cfg).items()}
    return json.dumps(doc, indent=2)


def read_result(path) -> SceneResult:
    sections = ct.read_container(path, ct.KIND_RESULT)
    for name in ("points", "proposals"):
        if name not in sections:
            raise FormatError(f"missing section {name!r}", path=path, field=name)
    pts, props = sections["points"], sections["proposals"]
    col = lambda sec, name, cols=1: ct.require(sec, name, path, cols)[:, 0] if cols == 1 else ct.require(sec, name, path, cols)  # noqa: E731
    return SceneResult(col(pts, "instance"), col(pts, "block"), col(props, "id"), col(props, "block"),
                       col(props, "score"), col(props, "category"), col(props, "point_count"),
                       col(props, "anchor", 3))


def timing_log(res: SceneResult) -> str:
    """One JSON line per block with point/voxel counts and stage seconds."""
    lines = []
    for run in sorted(res.runs, key=lambda r: r.block.block_id):
        lines.append(json.dumps({"block": run.block.block_id, "points": len(run.block),
                                 "voxels": run.n_voxels, "proposals": len(run.result.proposals),
                                 "seconds": {k: round(v, 6) for k, v in run.timings.items()}}))
    return "\n".join(lines) + ("\n" if lines else "")
