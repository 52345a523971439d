"""Pipeline configuration with the published operating point as defaults."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class PipelineConfig:
    gamma: float = 0.07                 # matching-score acceptance threshold
    epsilon_degrees: float = 30.0       # viewpoint cluster radius
    k_v: int = 5                        # top visible frames per candidate
    batch_limit: int = 4                # images per multiple-choice call
    depth_tol_m: float = 0.05           # occlusion test tolerance
    min_visible_fraction: float = 0.25  # fraction of points for "visible in frame"
    fusion_min_votes: str | int = "majority"
    denoise_k: int = 10
    denoise_std_ratio: float = 2.0
    bev_m_per_px: float = 0.02
    max_fine_frames: int = 5            # frame cap for the matching score
    eval_workers: int = 1

    @property
    def epsilon_radians(self) -> float:
        return math.radians(self.epsilon_degrees)

    def min_votes(self, n_views: int) -> int:
        if self.fusion_min_votes == "majority":
            return math.ceil(n_views / 2)
        return int(self.fusion_min_votes)

    def to_json(self) -> dict:
        return asdict(self)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, overlaid by an optional flat-JSON file, overlaid by
    explicit overrides (CLI flags). Unknown file keys are rejected."""
    cfg = PipelineConfig()
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        known = set(cfg.to_json())
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **data)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if not 0 < cfg.gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if cfg.k_v < 1:
        raise ValueError("k_v must be >= 1")
    if cfg.batch_limit < 2:
        raise ValueError("batch_limit must be >= 2 (a 1-image round can never eliminate)")
    return cfg
