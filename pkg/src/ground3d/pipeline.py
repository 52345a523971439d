"""End-to-end grounding: align, rectify when alignment fails wholesale,
then distill viewpoints and disambiguate."""

from __future__ import annotations

import json
from pathlib import Path

from .alignment import AlignmentOutcome, align
from .clients import ModelServices
from .config import PipelineConfig
from .errors import Ground3dError, NoCandidates, NoVisibleFrames
from .rectification import rectify, should_rectify
from .rendering import save_png
from .scene import GroundingQuery, Scene, scene_category_list
from .viewpoint import (
    STATUS_ERROR,
    STATUS_NO_MATCH,
    GroundingResult,
    build_prompt_set,
    disambiguate,
)


class Trace:
    """Writes per-query debug artifacts under a directory; a None trace
    is a no-op everywhere it is threaded through."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def save_json(self, name: str, payload) -> None:
        with open(self.directory / name, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    def save_image(self, name: str, img) -> None:
        save_png(img, self.directory / name)


def _empty_alignment() -> AlignmentOutcome:
    return AlignmentOutcome(
        refined_proposals=(),
        valid_categories=frozenset(),
        max_eta=0.0,
        top3_categories=frozenset(),
        scores=(),
        zeta=(),
    )


def run_grounding(
    scene: Scene,
    proposals,
    query: GroundingQuery,
    services: ModelServices,
    config: PipelineConfig | None = None,
    trace_dir=None,
) -> GroundingResult:
    """Execute the three phases in order and return the grounded box.

    Phase errors never raise; they come back as a result with status
    ``error`` naming the failing phase.
    """
    config = config or PipelineConfig()
    trace = Trace(trace_dir) if trace_dir else None
    phase = "parse"
    try:
        parse = services.parser.parse_query(query.text, scene_category_list(proposals))
        if trace is not None:
            trace.save_json("parse.json", parse.to_json())

        phase = "alignment"
        try:
            outcome = align(proposals, parse, scene, services, config)
        except NoCandidates:
            outcome = _empty_alignment()
        if trace is not None:
            trace.save_json("alignment.json", outcome.to_json())

        phase = "rectification"
        refined = list(outcome.refined_proposals)
        if should_rectify(outcome.max_eta, config.gamma):
            seeds = [p for p in proposals if p.category in outcome.top3_categories]
            refined, cases = rectify(seeds, proposals, parse, scene, services, config, trace)
            if trace is not None:
                trace.save_json("rectification.json", [c.to_json() for c in cases])
        if not refined:
            return GroundingResult(
                query.text, scene.scene_id, STATUS_NO_MATCH, None, None,
                "no target found: alignment and rectification both came up empty",
            )

        phase = "disambiguation"
        prompt_sets = []
        boxes = {}
        for proposal in refined:
            try:
                prompt_sets.append(build_prompt_set(proposal, scene, config))
            except NoVisibleFrames:
                continue  # cannot be shown to the chooser
            boxes[proposal.proposal_id] = proposal.box
        if trace is not None:
            for ps in prompt_sets:
                for pair in ps.pairs:
                    trace.save_image(
                        f"composite_p{ps.proposal_id}_c{pair.cluster_id}.png", pair.composite
                    )
        result = disambiguate(
            prompt_sets, query.text, scene.scene_id, services, config.batch_limit, boxes
        )
        if trace is not None:
            trace.save_json("tournament.json", list(result.rounds))
        return result
    except Ground3dError as exc:
        return GroundingResult(
            query.text, scene.scene_id, STATUS_ERROR, None, None,
            f"{phase} failed: {type(exc).__name__}: {exc}",
        )


def result_to_json(result: GroundingResult, trace_dir=None) -> dict:
    payload = result.to_json()
    if trace_dir:
        payload["trace_dir"] = str(trace_dir)
    return payload
