"""Versioned key-value pipeline configuration.

File format, one ``key = value`` per line, ``#`` starts a comment::

    version = 1
    k_ratio = 3000
    merge_radius = 1.0
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .metrics import AP_RANGES
from .segmenter import CANDIDATE_SPACES, SegmenterParams
from .taxonomy import InvalidInputError

CONFIG_VERSION = 1
CONFIG_ENV = "URBANSEG_CONFIG"
SCORERS = ("geometric", "gt")


@dataclass(frozen=True)
class PipelineConfig:
    features: str = "oracle"
    noise_embedding: float = 0.0
    noise_offset: float = 0.0
    noise_semantic: float = 0.0
    k_ratio: int = 3000
    k_max: int = 100
    merge_radius: float = 1.0
    score_threshold: float = 0.1
    voxel_edge: float = 1.0 / 3.0
    max_points: int = 500_000
    dim: int = 16
    seed: int = 0
    ap_range: str = "25-95"
    candidate_space: str = "shifted"
    scorer: str = "geometric"
    workers: int = 0

    def __post_init__(self):
        for name in ("k_ratio", "k_max", "merge_radius", "voxel_edge", "max_points", "dim"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("noise_embedding", "noise_offset", "noise_semantic", "workers"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise InvalidInputError("score_threshold must lie in [0, 1]")
        if self.noise_semantic > 1:
            raise InvalidInputError("noise_semantic is a probability")
        if self.ap_range not in AP_RANGES:
            raise InvalidInputError(f"ap_range must be one of {sorted(AP_RANGES)}")
        if self.candidate_space not in CANDIDATE_SPACES:
            raise InvalidInputError(f"candidate_space must be one of {CANDIDATE_SPACES}")
        if self.scorer not in SCORERS:
            raise InvalidInputError(f"scorer must be one of {SCORERS}")
        if not (self.features == "oracle" or (self.features.startswith("file:") and len(self.features) > 5)):
            raise InvalidInputError(f"features must be 'oracle' or 'file:PATH', got {self.features!r}")

    def segmenter_params(self) -> SegmenterParams:
        return SegmenterParams(self.k_ratio, self.k_max, self.merge_radius, self.score_threshold,
                               self.candidate_space, seed=self.seed)

    def updated(self, **changes) -> PipelineConfig:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def dumps(self) -> str:
        lines = [f"version = {CONFIG_VERSION}"]
        lines += [f"{k} = {v}" for k, v in asdict(self).items()]
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise InvalidInputError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    values = {}
    version = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "version":
            version = raw
            continue
        if key not in _TYPES:
            raise InvalidInputError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    if version != str(CONFIG_VERSION):
        raise InvalidInputError(f"{source}: config version must be {CONFIG_VERSION}, got {version}")
    return PipelineConfig(**values)


def load_config(path=None) -> PipelineConfig:
    """Load ``path``, else the file named by ``$URBANSEG_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
