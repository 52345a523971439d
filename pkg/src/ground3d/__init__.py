"""Zero-shot 3D visual grounding over RGB-D scan bundles.

Localizes a language-described object in a scanned scene by aligning 3D
proposals with 2D evidence (category correction), rebuilding geometry
from point-prompted segmentations when every proposal fails, and
disambiguating the survivors through batched multiple-choice reasoning
over RGB/BEV composites.
"""

from .alignment import AlignmentOutcome, MatchScore, align, coarse_filter, fine_match
from .clients import (
    ChoiceResult,
    Detection2D,
    EmbeddingVector,
    ModelServices,
    PointPromptResult,
    QueryParse,
)
from .config import PipelineConfig, load_config
from .evaluation import EvalReport, ReferenceItem, evaluate, load_references
from .geometry import (
    Box2D,
    ViewCluster,
    Visibility,
    angular_distance,
    back_project_mask,
    bbox_from_indices,
    cluster_directions,
    denoise_points,
    fuse_views,
    iou_2d,
    iou_3d,
    project_point,
    proposal_visibility,
    rank_visible_frames,
    viewing_direction,
)
from .pipeline import run_grounding
from .rectification import RectificationCase, rectify, should_rectify
from .scene import (
    Box3D,
    CameraFrame,
    GroundingQuery,
    Proposal3D,
    Scene,
    load_proposals,
    load_scene_bundle,
    scene_category_list,
)
from .viewpoint import (
    GroundingResult,
    PromptPair,
    PromptSet,
    compose_prompt_pair,
    disambiguate,
    distill_viewpoints,
    render_bev,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentOutcome",
    "Box2D",
    "Box3D",
    "CameraFrame",
    "ChoiceResult",
    "Detection2D",
    "EmbeddingVector",
    "EvalReport",
    "GroundingQuery",
    "GroundingResult",
    "MatchScore",
    "ModelServices",
    "PipelineConfig",
    "PointPromptResult",
    "PromptPair",
    "PromptSet",
    "Proposal3D",
    "QueryParse",
    "RectificationCase",
    "ReferenceItem",
    "Scene",
    "ViewCluster",
    "Visibility",
    "align",
    "angular_distance",
    "back_project_mask",
    "bbox_from_indices",
    "cluster_directions",
    "coarse_filter",
    "compose_prompt_pair",
    "denoise_points",
    "disambiguate",
    "distill_viewpoints",
    "evaluate",
    "fine_match",
    "fuse_views",
    "iou_2d",
    "iou_3d",
    "load_config",
    "load_proposals",
    "load_references",
    "load_scene_bundle",
    "project_point",
    "proposal_visibility",
    "rank_visible_frames",
    "rectify",
    "render_bev",
    "run_grounding",
    "scene_category_list",
    "should_rectify",
    "viewing_direction",
]
