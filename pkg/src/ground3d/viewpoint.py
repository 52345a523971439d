"""Viewpoint distillation: cluster views, render BEV maps, compose prompt
pairs, and disambiguate candidates through batched multiple choice.

Rendering constants (scale, margins, marker geometry, gutter) are fixed
and golden-image tested: the composites are consumed by an external
vision model, so pixel-stable output is part of the contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .clients import ModelServices
from .config import PipelineConfig
from .errors import (
    DegenerateExtent,
    NotVisible,
    NoVisibleFrames,
    RefusalOrExhausted,
)
from .geometry import (
    ViewCluster,
    cluster_directions,
    proposal_visibility,
    rank_visible_frames,
    viewing_direction,
)
from .rendering import RED, draw_arrow, draw_disk, draw_rect, draw_text, hstack_with_gutter, text_size
from .scene import Box3D, CameraFrame, Proposal3D, Scene

BEV_MARGIN_M = 0.5
BEV_BOX_THICKNESS = 2
BEV_CAMERA_DOT_RADIUS = 4
BEV_ARROW_LENGTH_PX = 40
PAIR_BOX_THICKNESS = 3
PAIR_GUTTER_PX = 4

STATUS_GROUNDED = "grounded"
STATUS_NO_MATCH = "no_match"
STATUS_ERROR = "error"


@dataclass(frozen=True)
class PromptPair:
    """Side-by-side composite of an annotated RGB view and its BEV map."""

    proposal_id: int
    cluster_id: int
    frame_id: int
    composite: np.ndarray
    bev_camera: tuple[tuple[float, float], tuple[float, float]]  # XY position, XY direction


@dataclass(frozen=True)
class PromptSet:
    proposal_id: int
    pairs: tuple[PromptPair, ...]


@dataclass(frozen=True)
class GroundingResult:
    query: str
    scene_id: str
    status: str
    chosen_proposal_id: int | None
    box: Box3D | None
    rationale: str
    rounds: tuple[dict, ...] = ()

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "scene_id": self.scene_id,
            "status": self.status,
            "proposal_id": self.chosen_proposal_id,
            "box": self.box.to_json() if self.box is not None else None,
            "rationale": self.rationale,
        }


def distill_viewpoints(
    proposal: Proposal3D,
    scene: Scene,
    config: PipelineConfig,
) -> list[ViewCluster]:
    """Top-k_v visible frames clustered by viewing direction; each
    cluster's representative is its largest-area member (ties: lowest
    frame id)."""
    ranked = rank_visible_frames(
        proposal, scene, config.min_visible_fraction, config.depth_tol_m
    )
    if not ranked:
        raise NoVisibleFrames(f"proposal {proposal.proposal_id} has no visible frame")
    top = ranked[: config.k_v]
    centroid = proposal.centroid(scene)
    directions = [
        viewing_direction(scene.frame_by_id(v.frame_id), centroid) for v in top
    ]
    clusters = cluster_directions(
        directions, config.epsilon_radians, frame_ids=[v.frame_id for v in top]
    )
    area = {v.frame_id: v.pixel_area for v in top}
    out = []
    for cluster in clusters:
        rep = min(cluster.member_frame_ids, key=lambda fid: (-area[fid], fid))
        out.append(ViewCluster(cluster.member_frame_ids, cluster.center_direction, rep))
    return out


def bev_geometry(scene: Scene, m_per_px: float, margin: float = BEV_MARGIN_M):
    """BEV extent: scene XY hull plus margin. Returns (x0, y0, W, H)."""
    xy = scene.points[:, :2]
    span = xy.max(axis=0) - xy.min(axis=0)
    if span[0] < m_per_px or span[1] < m_per_px:
        raise DegenerateExtent(f"scene XY span {span} is below one pixel at {m_per_px} m/px")
    x0 = float(xy[:, 0].min() - margin)
    y0 = float(xy[:, 1].min() - margin)
    width = int(round((span[0] + 2 * margin) / m_per_px))
    height = int(round((span[1] + 2 * margin) / m_per_px))
    return x0, y0, width, height


def render_bev(
    scene: Scene,
    highlight_proposals,
    camera: CameraFrame,
    m_per_px: float = 0.02,
) -> np.ndarray:
    """Orthographic top-down map of the cloud.

    Pixels take the color of their highest-z point (empty pixels white);
    +x maps to +u and +y to +v (rows). Highlighted (id, box) footprints
    are drawn in red with centered numeric markers; the camera appears as
    a red dot with an arrow along the XY component of its optical axis.
    """
    x0, y0, width, height = bev_geometry(scene, m_per_px)
    px = np.floor((scene.points[:, 0] - x0) / m_per_px).astype(np.int64)
    py = np.floor((scene.points[:, 1] - y0) / m_per_px).astype(np.int64)
    img = kernels.bev_paint(px, py, scene.points[:, 2], scene.colors, width, height)

    def to_px(x, y):
        return (x - x0) / m_per_px, (y - y0) / m_per_px

    for proposal_id, box in highlight_proposals:
        bx0, by0 = to_px(box.lo[0], box.lo[1])
        bx1, by1 = to_px(box.hi[0], box.hi[1])
        draw_rect(img, bx0, by0, bx1, by1, RED, thickness=BEV_BOX_THICKNESS)
        label = str(proposal_id)
        tw, th = text_size(label)
        draw_text(
            img,
            int(round((bx0 + bx1) / 2 - tw / 2)),
            int(round((by0 + by1) / 2 - th / 2)),
            label,
            RED,
        )

    cam_pos = camera.camera_position()
    cx, cy = to_px(cam_pos[0], cam_pos[1])
    draw_disk(img, cx, cy, BEV_CAMERA_DOT_RADIUS, RED)
    axis = camera.optical_axis()[:2]
    if np.linalg.norm(axis) > 1e-9:
        draw_arrow(img, cx, cy, axis, BEV_ARROW_LENGTH_PX, RED)
    return img


def compose_prompt_pair(
    frame: CameraFrame,
    proposal: Proposal3D,
    bev: np.ndarray,
    scene: Scene,
    cluster_id: int = 0,
    depth_tol: float = 0.05,
) -> PromptPair:
    """Left: the frame with the proposal's projected box in red and its
    numeric id at the box's top-left. Right: the BEV map. 4 px white
    gutter, shorter image letterboxed."""
    vis = proposal_visibility(proposal, frame, scene, depth_tol)
    if vis.visible_fraction <= 0.0:
        raise NotVisible(
            f"proposal {proposal.proposal_id} is not visible in frame {frame.frame_id}"
        )
    left = frame.image.copy()
    box = vis.bbox2d
    draw_rect(left, box.x_min, box.y_min, box.x_max, box.y_max, RED, thickness=PAIR_BOX_THICKNESS)
    draw_text(left, int(round(box.x_min)) + 4, int(round(box.y_min)) + 4, str(proposal.proposal_id), RED)
    composite = hstack_with_gutter(left, bev, gutter=PAIR_GUTTER_PX)
    cam = frame.camera_position()
    axis = frame.optical_axis()
    return PromptPair(
        proposal_id=proposal.proposal_id,
        cluster_id=cluster_id,
        frame_id=frame.frame_id,
        composite=composite,
        bev_camera=((float(cam[0]), float(cam[1])), (float(axis[0]), float(axis[1]))),
    )


def build_prompt_set(
    proposal: Proposal3D,
    scene: Scene,
    config: PipelineConfig,
) -> PromptSet:
    """One prompt pair per view cluster of the proposal."""
    clusters = distill_viewpoints(proposal, scene, config)
    pairs = []
    for cluster_id, cluster in enumerate(clusters):
        frame = scene.frame_by_id(cluster.representative_frame_id)
        bev = render_bev(scene, [(proposal.proposal_id, proposal.box)], frame, config.bev_m_per_px)
        pairs.append(
            compose_prompt_pair(frame, proposal, bev, scene, cluster_id, config.depth_tol_m)
        )
    return PromptSet(proposal.proposal_id, tuple(pairs))


def plan_round(by_id, remaining, batch_limit):
    """Image batches for one tournament round.

    Non-final rounds (and oversized finals) show each candidate's first
    pair; a final round whose full pair sequences fit the batch limit
    spreads them all. Returns (images, parallel candidate ids) per batch.
    """
    batches = [remaining[i : i + batch_limit] for i in range(0, len(remaining), batch_limit)]
    final_round = len(batches) == 1
    planned = []
    for batch in batches:
        if final_round and sum(len(by_id[pid].pairs) for pid in batch) <= batch_limit:
            images, candidate_ids = [], []
            for pid in batch:
                for pair in by_id[pid].pairs:
                    images.append(pair.composite)
                    candidate_ids.append(pid)
        else:
            images = [by_id[pid].pairs[0].composite for pid in batch]
            candidate_ids = list(batch)
        planned.append((images, candidate_ids))
    return planned


def _run_batch(images, candidate_ids, query, services, transcript_batches):
    """One multiple-choice call; returns the winning candidate id or None
    when the model refuses or exhausts its retries."""
    entry = {
        "candidates": list(candidate_ids),
        "n_images": len(images),
        "winner": None,
        "image_id": None,
        "retries": None,
        "replies": [],
    }
    transcript_batches.append(entry)
    try:
        outcome = services.vlm.choose_image(images, query)
    except RefusalOrExhausted as exc:
        entry["replies"] = [ex["reply"] for ex in exc.exchanges]
        entry["refused"] = True
        return None, ""
    entry["image_id"] = outcome.result.image_id
    entry["retries"] = dict(outcome.retries)
    entry["replies"] = [ex["reply"] for ex in outcome.exchanges]
    winner = candidate_ids[outcome.result.image_id]
    entry["winner"] = winner
    return winner, outcome.result.process


def disambiguate(
    prompt_sets,
    query: str,
    scene_id: str,
    services: ModelServices,
    batch_limit: int = 4,
    boxes: dict | None = None,
) -> GroundingResult:
    """Single-elimination tournament over candidate prompt sets.

    Each round shows one composite per candidate, batched up to
    batch_limit images per call; batch winners advance. The final round
    (a single batch) spreads each finalist's full pair sequence when it
    fits the limit. A refusal eliminates that batch's candidates; if all
    candidates are eliminated the result is no_match. ``boxes`` maps
    proposal ids to their 3D boxes for the grounded result.
    """
    prompt_sets = list(prompt_sets)
    boxes = boxes or {}
    if batch_limit < 2:
        raise ValueError("batch_limit must be >= 2")
    if not prompt_sets:
        return GroundingResult(query, scene_id, STATUS_NO_MATCH, None, None,
                               "no candidates reached disambiguation")
    by_id = {ps.proposal_id: ps for ps in prompt_sets}
    rounds: list[dict] = []

    remaining = [ps.proposal_id for ps in prompt_sets]
    rationale = ""
    if len(remaining) == 1:
        winner = remaining[0]
        return GroundingResult(query, scene_id, STATUS_GROUNDED, winner, boxes.get(winner),
                               "single candidate", tuple(rounds))

    while len(remaining) > 1:
        round_entry = {"round": len(rounds), "batches": []}
        rounds.append(round_entry)
        winners = []
        for images, candidate_ids in plan_round(by_id, remaining, batch_limit):
            winner, process = _run_batch(
                images, candidate_ids, query, services, round_entry["batches"]
            )
            if winner is not None:
                winners.append(winner)
                rationale = process
        if not winners:
            return GroundingResult(query, scene_id, STATUS_NO_MATCH, None, None,
                                   "all candidates eliminated", tuple(rounds))
        remaining = winners

    winner = remaining[0]
    return GroundingResult(query, scene_id, STATUS_GROUNDED, winner, boxes.get(winner),
                           rationale, tuple(rounds))


def vlm_call_bound(n_candidates: int, batch_limit: int = 4) -> int:
    """ceil(n/b) + ceil(ceil(n/b)/b) + ... until one candidate remains."""
    calls = 0
    n = n_candidates
    while n > 1:
        batches = math.ceil(n / batch_limit)
        calls += batches
        n = batches
    return calls
