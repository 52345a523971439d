"""Semantic alignment: correct proposal categories against 2D evidence.

Coarse stage: keep proposals whose category appears in the parsed top-10,
embed each one's best-view crop, and reduce to the three categories whose
proposals align best with the target text embedding. Fine stage: score
each remaining proposal by how well text-prompted 2D detections overlap
its projected box, averaged over its best visible frames. Proposals at or
above the threshold are matched (category rewritten to the target);
unmatched proposals sharing a matched category are salvaged; the rest are
discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clients import EmbeddingVector, ModelServices, QueryParse
from .config import PipelineConfig
from .errors import NoCandidates, NoVisibleFrames
from .geometry import iou_2d, rank_visible_frames
from .scene import Proposal3D, Scene, STATE_MATCHED, STATE_SALVAGED

CROP_PADDING = 0.10  # fraction of bbox width/height added per side


@dataclass(frozen=True)
class MatchScore:
    """Per-proposal spatial matching score.

    eta is the mean over evaluated frames of (best detection IoU x that
    detection's confidence); frames with no detections contribute (0, 0).
    """

    proposal_id: int
    eta: float
    per_frame: tuple[tuple[int, float, float], ...]  # (frame_id, best_iou, best_score)

    def to_json(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "eta": self.eta,
            "per_frame": [list(entry) for entry in self.per_frame],
        }


@dataclass(frozen=True)
class AlignmentOutcome:
    refined_proposals: tuple[Proposal3D, ...]
    valid_categories: frozenset[str]
    max_eta: float
    top3_categories: frozenset[str]
    scores: tuple[MatchScore, ...]
    zeta: tuple[tuple[int, float], ...] = ()  # (proposal_id, coarse similarity)

    def to_json(self) -> dict:
        return {
            "refined": [
                {
                    "proposal_id": p.proposal_id,
                    "category": p.category,
                    "state": p.state,
                    "box": p.box.to_json(),
                }
                for p in self.refined_proposals
            ],
            "valid_categories": sorted(self.valid_categories),
            "max_eta": self.max_eta,
            "top3_categories": sorted(self.top3_categories),
            "scores": [s.to_json() for s in self.scores],
            "zeta": [list(z) for z in self.zeta],
        }


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    num = float(np.dot(a.values, b.values))
    den = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    if den == 0.0:
        return 0.0
    return num / den


def best_view_crop(proposal: Proposal3D, scene: Scene, config: PipelineConfig) -> np.ndarray:
    """Crop of the proposal from its largest-area visible frame, with 10%
    padding per side, clipped to the image."""
    ranked = rank_visible_frames(
        proposal, scene, config.min_visible_fraction, config.depth_tol_m
    )
    if not ranked:
        raise NoVisibleFrames(f"proposal {proposal.proposal_id} has no visible frame")
    vis = ranked[0]
    frame = scene.frame_by_id(vis.frame_id)
    box = vis.bbox2d
    pad_x = CROP_PADDING * (box.x_max - box.x_min)
    pad_y = CROP_PADDING * (box.y_max - box.y_min)
    x0 = int(math.floor(max(0.0, box.x_min - pad_x)))
    y0 = int(math.floor(max(0.0, box.y_min - pad_y)))
    x1 = int(math.ceil(min(frame.width, box.x_max + pad_x)))
    y1 = int(math.ceil(min(frame.height, box.y_max + pad_y)))
    x1 = min(frame.width, max(x1, x0 + 1))
    y1 = min(frame.height, max(y1, y0 + 1))
    x0 = min(x0, x1 - 1)
    y0 = min(y0, y1 - 1)
    return frame.image[y0:y1, x0:x1]


def coarse_filter(
    proposals,
    parse: QueryParse,
    scene: Scene,
    services: ModelServices,
    config: PipelineConfig,
):
    """Reduce to the three best-aligned categories.

    Returns (top3_categories, candidate_proposal_ids, zeta) where zeta
    lists (proposal_id, similarity) for every scored proposal.
    """
    in_top10 = [p for p in proposals if p.category in parse.top_categories]
    if not in_top10:
        raise NoCandidates(
            f"no proposal category intersects the parsed top-10 for {parse.query!r}"
        )
    text_emb = services.embedder.embed_text(parse.target_category)
    zeta: list[tuple[int, float]] = []
    for proposal in in_top10:
        try:
            crop = best_view_crop(proposal, scene, config)
        except NoVisibleFrames:
            continue  # cannot be scored without a view; may still ride along below
        crop_emb = services.embedder.embed_image(crop)
        zeta.append((proposal.proposal_id, cosine_similarity(text_emb, crop_emb)))

    ranked = sorted(zeta, key=lambda item: (-item[1], item[0]))
    winners = {pid for pid, _ in ranked[:3]}
    by_id = {p.proposal_id: p for p in proposals}
    top3_categories = frozenset(by_id[pid].category for pid in winners)
    candidate_ids = [p.proposal_id for p in proposals if p.category in top3_categories]
    return top3_categories, candidate_ids, tuple(zeta)


def fine_match(
    proposal: Proposal3D,
    scene: Scene,
    target_category: str,
    services: ModelServices,
    config: PipelineConfig,
    max_frames: int | None = None,
) -> MatchScore:
    """Spatial matching score over the proposal's best visible frames."""
    if max_frames is None:
        max_frames = config.max_fine_frames
    ranked = rank_visible_frames(
        proposal, scene, config.min_visible_fraction, config.depth_tol_m
    )
    if not ranked:
        raise NoVisibleFrames(f"proposal {proposal.proposal_id} has no visible frame")
    per_frame = []
    for vis in ranked[:max_frames]:
        frame = scene.frame_by_id(vis.frame_id)
        detections = services.segmenter.segment_by_text(frame.image, target_category)
        best_iou, best_score = 0.0, 0.0
        best = None
        for det in detections:
            overlap = iou_2d(vis.bbox2d, det.box)
            if best is None or overlap > best_iou:
                best = det
                best_iou = overlap
        if best is not None:
            best_score = best.score
        per_frame.append((vis.frame_id, best_iou, best_score))
    eta = float(np.mean([iou * score for _, iou, score in per_frame]))
    return MatchScore(proposal.proposal_id, eta, tuple(per_frame))


def align(
    proposals,
    parse: QueryParse,
    scene: Scene,
    services: ModelServices,
    config: PipelineConfig,
) -> AlignmentOutcome:
    """Full semantic alignment pass (coarse filter, fine match, category
    propagation at threshold gamma)."""
    top3, candidate_ids, zeta = coarse_filter(proposals, parse, scene, services, config)
    by_id = {p.proposal_id: p for p in proposals}
    scores = []
    for pid in candidate_ids:
        try:
            scores.append(fine_match(by_id[pid], scene, parse.target_category, services, config))
        except NoVisibleFrames:
            scores.append(MatchScore(pid, 0.0, ()))
    eta_by_id = {s.proposal_id: s.eta for s in scores}
    max_eta = max(eta_by_id.values(), default=0.0)

    matched_ids = [pid for pid in candidate_ids if eta_by_id[pid] >= config.gamma]
    valid_categories = frozenset(by_id[pid].category for pid in matched_ids)

    refined = [
        by_id[pid].with_state(STATE_MATCHED, category=parse.target_category)
        for pid in matched_ids
    ]
    refined += [
        by_id[pid].with_state(STATE_SALVAGED)
        for pid in candidate_ids
        if pid not in set(matched_ids) and by_id[pid].category in valid_categories
    ]
    return AlignmentOutcome(
        refined_proposals=tuple(refined),
        valid_categories=valid_categories,
        max_eta=float(max_eta),
        top3_categories=top3,
        scores=tuple(scores),
        zeta=zeta,
    )
