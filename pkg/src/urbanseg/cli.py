"""Command-line front end: sample, segment, evaluate, stats, synth.

Exit codes: 0 success, 1 validation error, 2 I/O or file-format error,
3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __doc__ as package_doc
from .config import CONFIG_ENV, SCORERS, load_config
from .container import FormatError
from .features import DimensionMismatchError
from .ingest import DEFAULT_DENSITY, read_cloud, read_mesh, sample_mesh, write_cloud
from .metrics import AP_RANGES, evaluate
from .pipeline import read_result, result_json, segment_scene, timing_log, write_result
from .segmenter import CANDIDATE_SPACES
from .stats import (UndefinedCorrelationError, correlation_matrix, load_summaries, long_tail, matrix_csv,
                    render_tables, summaries_csv, summarize)
from .synth import SynthSpec, synthesize
from .taxonomy import InvalidInputError

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3
log = logging.getLogger("urbanseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_segment_flags(p):
    g = p.add_argument_group("pipeline (flags override the config file)")
    g.add_argument("--config", help=f"key-value config file (default: ${CONFIG_ENV} if set)")
    g.add_argument("--features", help="'oracle' or 'file:PATH' (default oracle)")
    g.add_argument("--noise-embedding", type=float, help="oracle embedding noise sigma (default 0)")
    g.add_argument("--noise-offset", type=float, help="oracle offset noise sigma in m (default 0)")
    g.add_argument("--noise-semantic", type=float, help="oracle label flip probability (default 0)")
    g.add_argument("--k-ratio", type=int, help="foreground points per candidate (default 3000)")
    g.add_argument("--k-max", type=int, help="maximum candidates per block (default 100)")
    g.add_argument("--merge-radius", type=float, help="anchor merge radius in m (default 1.0)")
    g.add_argument("--score-threshold", type=float, help="drop proposals scoring below this (default 0.1)")
    g.add_argument("--voxel-edge", type=float, help="voxel edge in m (default 1/3)")
    g.add_argument("--max-points", type=int, help="block size cap (default 500000)")
    g.add_argument("--dim", type=int, help="oracle embedding dimension (default 16)")
    g.add_argument("--seed", type=int, help="seed for cropping, noise and sampling starts (default 0)")
    g.add_argument("--candidate-space", choices=CANDIDATE_SPACES, help="FPS coordinates (default shifted)")
    g.add_argument("--scorer", choices=SCORERS, help="proposal scorer (default geometric)")
    g.add_argument("--workers", type=int, help="block worker threads, 0 = all cores (default 0)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="urbanseg", description=package_doc, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample a labelled PLY mesh into a point cloud", formatter_class=fmt)
    p.add_argument("mesh", help="input mesh (.ply)")
    p.add_argument("--density", type=float, default=DEFAULT_DENSITY, help="points per square meter")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--workers", type=int, default=1, help="sampling threads")
    p.add_argument("--out", required=True, help="output cloud (.ply or container)")

    p = sub.add_parser("segment", help="segment building instances block by block", formatter_class=fmt)
    p.add_argument("cloud", help="input cloud")
    p.add_argument("--out", required=True, help="output prefix: PREFIX.result, PREFIX.json, PREFIX.timing.jsonl")
    p.add_argument("--export-ply", action="store_true", help="also write PREFIX.instances.ply colored by instance")
    _add_segment_flags(p)

    p = sub.add_parser("evaluate", help="score a segmentation result against ground truth", formatter_class=fmt)
    p.add_argument("result", help="PREFIX.result written by 'segment'")
    p.add_argument("ground_truth", help="annotated cloud the result was computed on")
    p.add_argument("--ap-range", choices=sorted(AP_RANGES), default="25-95", help="IoU thresholds averaged into AP")
    p.add_argument("--out", help="output prefix for PREFIX.json and PREFIX.txt")
    p.add_argument("--curves", action="store_true", help="include precision/recall curves in the JSON")

    p = sub.add_parser("stats", help="scene statistics, long tail and correlation", formatter_class=fmt)
    p.add_argument("inputs", nargs="+", help="clouds or summary .json files")
    p.add_argument("--names", nargs="*", help="scene names for cloud inputs (default: file stem)")
    p.add_argument("--out", help="output prefix for PREFIX.json, PREFIX.summaries.csv, PREFIX.correlation.csv")

    p = sub.add_parser("synth", help="generate a synthetic annotated scene", formatter_class=fmt)
    p.add_argument("--spec", help="JSON scene spec; flags below override it")
    p.add_argument("--buildings", type=int, help="number of buildings (default 20)")
    p.add_argument("--density", type=float, help="points per square meter (default 20)")
    p.add_argument("--vegetation", type=int, help="vegetation blobs (default 10)")
    p.add_argument("--vehicles", type=int, help="vehicles (default 10)")
    p.add_argument("--tower-fraction", type=float, help="share of 100-150 m towers (default 0)")
    p.add_argument("--seed", type=int, default=0, help="scene seed")
    p.add_argument("--out", required=True, help="output cloud")
    return parser


def cmd_sample(args) -> int:
    mesh = read_mesh(args.mesh)
    cloud = sample_mesh(mesh, args.density, args.seed, workers=args.workers)
    write_cloud(cloud, args.out)
    print(f"{len(cloud)} points -> {args.out}")
    return EXIT_OK


def _segment_config(args):
    cfg = load_config(args.config)
    return cfg.updated(features=args.features, noise_embedding=args.noise_embedding,
                       noise_offset=args.noise_offset, noise_semantic=args.noise_semantic,
                       k_ratio=args.k_ratio, k_max=args.k_max, merge_radius=args.merge_radius,
                       score_threshold=args.score_threshold, voxel_edge=args.voxel_edge,
                       max_points=args.max_points, dim=args.dim, seed=args.seed,
                       candidate_space=args.candidate_space, scorer=args.scorer, workers=args.workers)


def cmd_segment(args) -> int:
    cfg = _segment_config(args)
    cloud = read_cloud(args.cloud)
    res = segment_scene(cloud, cfg)
    prefix = args.out
    write_result(res, f"{prefix}.result")
    Path(f"{prefix}.json").write_text(result_json(res, cfg))
    Path(f"{prefix}.timing.jsonl").write_text(timing_log(res))
    if args.export_ply:
        _export_instance_ply(cloud, res.instance, f"{prefix}.instances.ply")
    for run in res.runs:
        log.info("block %d: %d points, %d proposals, %.3fs", run.block.block_id, len(run.block),
                 len(run.result.proposals), run.timings.get("total", 0.0))
    print(f"{len(res.runs)} blocks, {res.proposal_id.size} instances -> {prefix}.result")
    return EXIT_OK


def _export_instance_ply(cloud, instance, path):
    from .ply import write_ply

    rng = np.random.default_rng(0)
    palette = rng.integers(40, 256, size=(int(instance.max()) + 2 if instance.size else 1, 3)).astype(np.uint8)
    colors = np.where(instance[:, None] >= 0, palette[np.maximum(instance, 0)], np.uint8(90))
    write_ply(path, [("vertex", {"x": cloud.positions[:, 0], "y": cloud.positions[:, 1],
                                 "z": cloud.positions[:, 2], "red": colors[:, 0], "green": colors[:, 1],
                                 "blue": colors[:, 2], "instance": instance.astype(np.int32)})])


def cmd_evaluate(args) -> int:
    res = read_result(args.result)
    cloud = read_cloud(args.ground_truth)
    if res.n_points != len(cloud):
        raise InvalidInputError(f"result covers {res.n_points} points but ground truth has {len(cloud)}")
    report = evaluate(res.instance, res.scores_by_id(), res.categories_by_id(), cloud.instance,
                      cloud.category, groups=res.block_of, ap_range=args.ap_range, with_curves=args.curves)
    table = report.table()
    print(table)
    if args.out:
        Path(f"{args.out}.json").write_text(report.to_json())
        Path(f"{args.out}.txt").write_text(table + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    summaries = []
    cloud_inputs = [p for p in args.inputs if Path(p).suffix.lower() != ".json"]
    names = list(args.names or [])
    if names and len(names) != len(cloud_inputs):
        raise InvalidInputError(f"--names got {len(names)} names for {len(cloud_inputs)} cloud inputs")
    for path in args.inputs:
        if Path(path).suffix.lower() == ".json":
            summaries.extend(load_summaries(path))
        else:
            name = names.pop(0) if names else Path(path).stem
            summaries.append(summarize(read_cloud(path), name))
    matrix = correlation_matrix(summaries)
    print(render_tables(summaries, matrix))
    print()
    for s in summaries:
        print(f"long tail {s.name}: " + ", ".join(f"{c.name.title()} {n}" for c, n in long_tail(s)))
    if args.out:
        names = [s.name for s in summaries]
        doc = {"scenes": [s.to_dict() for s in summaries], "names": names,
               "correlation": matrix.tolist(),
               "long_tail": {s.name: [[c.name, n] for c, n in long_tail(s)] for s in summaries}}
        Path(f"{args.out}.json").write_text(json.dumps(doc, indent=2))
        Path(f"{args.out}.summaries.csv").write_text(summaries_csv(summaries))
        Path(f"{args.out}.correlation.csv").write_text(matrix_csv(names, matrix))
    return EXIT_OK


def cmd_synth(args) -> int:
    base = SynthSpec.load(args.spec).__dict__ if args.spec else {}
    overrides = {"n_buildings": args.buildings, "density": args.density, "n_vegetation": args.vegetation,
                 "n_vehicles": args.vehicles, "tower_fraction": args.tower_fraction}
    spec = SynthSpec.from_dict({**base, **{k: v for k, v in overrides.items() if v is not None}})
    cloud = synthesize(spec, args.seed)
    write_cloud(cloud, args.out)
    print(f"{len(cloud)} points, {len(cloud.instance_ids())} buildings -> {args.out}")
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "segment": cmd_segment, "evaluate": cmd_evaluate, "stats": cmd_stats,
            "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidInputError, UndefinedCorrelationError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
