"""Instance rectification: rebuild target geometry from 2D cues.

When no proposal clears the matching threshold, the initial 3D geometry
is considered untrustworthy. For each seed proposal in the top-3
categories we walk its best visible frames through a three-stage visual
cue protocol (anchor-aware presence check, 2-positive/1-negative point
prompting, dot-overlay re-verification), segment the survivors by points,
back-project the masks, fuse them across views by majority vote, denoise,
and take the hull as the rectified box.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clients import ModelServices, QueryParse
from .config import PipelineConfig
from .geometry import (
    back_project_mask,
    bbox_from_indices,
    denoise_points,
    fuse_views,
    proposal_visibility,
    rank_visible_frames,
)
from .prompts import format_anchor_descriptions
from .rendering import ANCHOR_PALETTE, GREEN, RED, draw_disk, draw_rect, draw_text
from .scene import Box3D, Proposal3D, Scene, STATE_RECTIFIED

DOT_RADIUS = 6  # pixels; stage-3 verification consumes these renderings
ANCHOR_BOX_THICKNESS = 3


@dataclass(frozen=True)
class RectificationCase:
    """Audit record of one seed's pass through the protocol."""

    proposal_id: int
    frames_considered: tuple[int, ...]
    stage1_survivors: tuple[int, ...]
    stage2_points: tuple[tuple[int, dict], ...]   # (frame_id, point reply summary)
    stage3_verified: tuple[int, ...]
    per_view_counts: tuple[tuple[int, int], ...]  # (frame_id, back-projected point count)
    fused_count: int
    rectified_box: Box3D | None

    def to_json(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "frames_considered": list(self.frames_considered),
            "stage1_survivors": list(self.stage1_survivors),
            "stage2_points": [[fid, summary] for fid, summary in self.stage2_points],
            "stage3_verified": list(self.stage3_verified),
            "per_view_counts": [list(entry) for entry in self.per_view_counts],
            "fused_count": self.fused_count,
            "rectified_box": self.rectified_box.to_json() if self.rectified_box else None,
        }


def should_rectify(max_eta: float, gamma: float) -> bool:
    """True when no proposal reached the matching threshold."""
    return max_eta < gamma


def annotate_anchors(
    frame_image: np.ndarray,
    anchor_proposals,
    scene: Scene,
    frame_id: int,
    depth_tol: float,
):
    """Overlay visible anchors' projected boxes as contextual cues.

    Returns (annotated copy, descriptions) where descriptions holds
    (label, category, box2d) triples for the prompt's anchor slot.
    Anchors invisible in this frame are omitted.
    """
    img = frame_image.copy()
    frame = scene.frame_by_id(frame_id)
    descriptions = []
    for i, anchor in enumerate(anchor_proposals):
        vis = proposal_visibility(anchor, frame, scene, depth_tol)
        if vis.visible_fraction <= 0.0:
            continue
        color = ANCHOR_PALETTE[i % len(ANCHOR_PALETTE)]
        box = vis.bbox2d
        draw_rect(img, box.x_min, box.y_min, box.x_max, box.y_max, color,
                  thickness=ANCHOR_BOX_THICKNESS)
        label = f"A{i}:{anchor.category}"
        draw_text(img, int(round(box.x_min)), max(0, int(round(box.y_min)) - 9), label, color)
        descriptions.append((f"A{i}", anchor.category, box))
    return img, descriptions


def render_prompt_points(image: np.ndarray, positive_points, negative_points) -> np.ndarray:
    """Plot the point prompts (green positive, red negative) for stage 3."""
    img = image.copy()
    for x, y in positive_points:
        draw_disk(img, x, y, DOT_RADIUS, GREEN)
    for x, y in negative_points:
        draw_disk(img, x, y, DOT_RADIUS, RED)
    return img


def _mean_stage2_confidence(stage2, surviving_ids) -> float:
    values = [reply["confidence"] for fid, reply in stage2 if fid in surviving_ids]
    if not values:
        return 0.0
    return float(np.mean(values))


def rectify_seed(
    seed: Proposal3D,
    anchor_proposals,
    parse: QueryParse,
    scene: Scene,
    services: ModelServices,
    config: PipelineConfig,
    trace=None,
) -> tuple[Proposal3D | None, RectificationCase]:
    """Run the three-stage protocol for one seed proposal."""
    ranked = rank_visible_frames(seed, scene, config.min_visible_fraction, config.depth_tol_m)
    frames = [scene.frame_by_id(v.frame_id) for v in ranked[: config.k_v]]
    considered = tuple(f.frame_id for f in frames)
    skip_stage1 = not parse.spatial_refs  # nothing to anchor on

    stage1_survivors = []
    prepared = {}  # frame_id -> (image for later stages, anchor text)
    for frame in frames:
        if anchor_proposals:
            img, descriptions = annotate_anchors(
                frame.image, anchor_proposals, scene, frame.frame_id, config.depth_tol_m
            )
            anchor_text = format_anchor_descriptions(descriptions)
        else:
            img, anchor_text = frame.image, ""
        if trace is not None and anchor_proposals:
            trace.save_image(f"seed{seed.proposal_id}_frame{frame.frame_id}_anchors.png", img)
        if skip_stage1:
            stage1_survivors.append(frame.frame_id)
            prepared[frame.frame_id] = (img, anchor_text)
            continue
        presence = services.vlm.presence_check(img, parse.query, anchor_text)
        if presence.presence:
            stage1_survivors.append(frame.frame_id)
            prepared[frame.frame_id] = (img, anchor_text)

    stage2 = []
    stage2_passing = {}
    for frame_id in stage1_survivors:
        img, anchor_text = prepared[frame_id]
        result = services.vlm.point_prompt(img, parse.query, anchor_text)
        summary = {
            "presence": result.presence,
            "positive_points": [list(p) for p in result.positive_points],
            "negative_points": [list(p) for p in result.negative_points],
            "confidence": result.confidence,
        }
        stage2.append((frame_id, summary))
        if result.presence and result.positive_points:
            stage2_passing[frame_id] = result

    stage3_verified = []
    for frame_id, result in stage2_passing.items():
        img, anchor_text = prepared[frame_id]
        dotted = render_prompt_points(img, result.positive_points, result.negative_points)
        if trace is not None:
            trace.save_image(f"seed{seed.proposal_id}_frame{frame_id}_points.png", dotted)
        verdict = services.vlm.verify_points(dotted, parse.query, anchor_text)
        if verdict.query_match:
            stage3_verified.append(frame_id)

    per_view_sets = []
    per_view_counts = []
    for frame_id in stage3_verified:
        frame = scene.frame_by_id(frame_id)
        result = stage2_passing[frame_id]
        detections = services.segmenter.segment_by_points(
            frame.image, result.positive_points, result.negative_points
        )
        if not detections:
            per_view_counts.append((frame_id, 0))
            continue
        best = max(detections, key=lambda d: d.score)
        indices = back_project_mask(best.mask, frame, scene, config.depth_tol_m)
        per_view_sets.append(indices)
        per_view_counts.append((frame_id, int(indices.size)))

    fused = np.empty(0, dtype=np.int64)
    box = None
    if per_view_sets:
        fused = fuse_views(per_view_sets, config.min_votes(len(per_view_sets)))
        fused = denoise_points(fused, scene, config.denoise_k, config.denoise_std_ratio)
        if fused.size > 0:
            box = bbox_from_indices(fused, scene)

    case = RectificationCase(
        proposal_id=seed.proposal_id,
        frames_considered=considered,
        stage1_survivors=tuple(stage1_survivors),
        stage2_points=tuple(stage2),
        stage3_verified=tuple(stage3_verified),
        per_view_counts=tuple(per_view_counts),
        fused_count=int(fused.size),
        rectified_box=box,
    )
    if trace is not None:
        trace.save_json(f"seed{seed.proposal_id}_case.json", case.to_json())
        if fused.size:
            trace.save_json(f"seed{seed.proposal_id}_fused_indices.json", fused.tolist())
    if box is None:
        return None, case

    fused.setflags(write=False)
    proposal = replace(
        seed,
        point_indices=fused,
        box=box,
        category=parse.target_category,
        confidence=_mean_stage2_confidence(stage2, set(stage3_verified)),
        state=STATE_RECTIFIED,
    )
    return proposal, case


def rectify(
    seeds,
    all_proposals,
    parse: QueryParse,
    scene: Scene,
    services: ModelServices,
    config: PipelineConfig,
    trace=None,
) -> tuple[list[Proposal3D], list[RectificationCase]]:
    """Rectify every seed independently; seeds whose surviving frame set
    or fused point set is empty yield no proposal."""
    anchors = sorted(
        (p for p in all_proposals if p.category in parse.spatial_refs),
        key=lambda p: p.proposal_id,
    )
    proposals = []
    cases = []
    for seed in sorted(seeds, key=lambda p: p.proposal_id):
        proposal, case = rectify_seed(seed, anchors, parse, scene, services, config, trace)
        cases.append(case)
        if proposal is not None:
            proposals.append(proposal)
    return proposals, cases
