"""Projective-geometry primitives.

Pure functions over immutable scenes: pinhole projection with a
depth-consistency visibility test, 2D/3D IoU, viewing-direction
clustering, and 2D-to-3D back-projection with cross-view vote fusion and
statistical outlier removal. Heavy per-point loops run in
:mod:`ground3d.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DegenerateDirection,
    DimensionMismatch,
    EmptySet,
    NoVisibleFrames,
)
from .scene import Box3D, CameraFrame, Proposal3D, Scene, hull_box

DEFAULT_DEPTH_TOL = 0.05  # meters
DEFAULT_MIN_VISIBLE_FRACTION = 0.25


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned 2D box in continuous pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"invalid box {self}")

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_json(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Visibility:
    """How a proposal lands in one frame.

    bbox2d is the hull of the visible projections, clipped to the image;
    it is present exactly when visible_fraction > 0.
    """

    frame_id: int
    visible_fraction: float
    bbox2d: Box2D | None
    pixel_area: int


@dataclass(frozen=True)
class ViewCluster:
    """A group of viewing directions within epsilon of their center."""

    member_frame_ids: tuple[int, ...]
    center_direction: np.ndarray
    representative_frame_id: int


def project_point(p, frame: CameraFrame):
    """Project one world point; returns ((u, v), cam_depth) or None when
    the point is behind the camera."""
    pts = np.asarray(p, dtype=np.float64).reshape(1, 3)
    intr = frame.intrinsics
    u, v, z = kernels.project_points(pts, frame.world_to_camera(), intr.fx, intr.fy, intr.cx, intr.cy)
    if z[0] <= kernels.MIN_FORWARD_Z:
        return None
    return (float(u[0]), float(v[0])), float(z[0])


def project_points(points: np.ndarray, frame: CameraFrame):
    """Vectorized pinhole projection; returns (u, v, z) arrays."""
    intr = frame.intrinsics
    return kernels.project_points(
        np.asarray(points, dtype=np.float64),
        frame.world_to_camera(),
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
    )


def visible_point_indices(
    indices: np.ndarray,
    frame: CameraFrame,
    scene: Scene,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> np.ndarray:
    """Subset of the given cloud indices that project in-frame and pass
    the depth-consistency (occlusion) test."""
    indices = np.asarray(indices, dtype=np.int64)
    u, v, z = project_points(scene.points[indices], frame)
    ok = kernels.depth_consistent_mask(u, v, z, frame.depth, depth_tol)
    return indices[ok]


def _visible_projection(indices, frame, scene, depth_tol):
    indices = np.asarray(indices, dtype=np.int64)
    u, v, z = project_points(scene.points[indices], frame)
    ok = kernels.depth_consistent_mask(u, v, z, frame.depth, depth_tol)
    return indices[ok], u[ok], v[ok]


def proposal_visibility(
    proposal: Proposal3D,
    frame: CameraFrame,
    scene: Scene,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> Visibility:
    """Fraction of the proposal's points visible in the frame, with the
    clipped 2D hull of the visible projections."""
    visible, u, v = _visible_projection(proposal.point_indices, frame, scene, depth_tol)
    fraction = visible.size / proposal.point_indices.size
    if visible.size == 0:
        return Visibility(frame.frame_id, 0.0, None, 0)
    box = Box2D(
        x_min=float(max(0.0, u.min())),
        y_min=float(max(0.0, v.min())),
        x_max=float(min(frame.width, u.max())),
        y_max=float(min(frame.height, v.max())),
    )
    return Visibility(frame.frame_id, float(fraction), box, int(round(box.area())))


def rank_visible_frames(
    proposal: Proposal3D,
    scene: Scene,
    min_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> list[Visibility]:
    """Frames where at least min_fraction of the proposal is visible,
    largest projected area first (ties: ascending frame id)."""
    if not 0 < min_fraction <= 1:
        raise ValueError("min_fraction must be in (0, 1]")
    qualifying = [
        vis
        for frame in scene.frames
        if (vis := proposal_visibility(proposal, frame, scene, depth_tol)).visible_fraction
        >= min_fraction
    ]
    return sorted(qualifying, key=lambda v: (-v.pixel_area, v.frame_id))


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Intersection-over-union of two 2D boxes; 0 when the union is empty."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Intersection-over-union of two axis-aligned 3D boxes."""
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    extent = np.maximum(0.0, hi - lo)
    inter = float(np.prod(extent))
    union = a.volume() + b.volume() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def viewing_direction(frame: CameraFrame, target_centroid) -> np.ndarray:
    """Unit vector from the camera position toward the target centroid."""
    delta = np.asarray(target_centroid, dtype=np.float64) - frame.camera_position()
    norm = float(np.linalg.norm(delta))
    if norm < 1e-9:
        raise DegenerateDirection("camera position coincides with target centroid")
    return delta / norm


def angular_distance(d_i, d_j) -> float:
    """Angle in radians between two directions (renormalized, clamped)."""
    a = np.asarray(d_i, dtype=np.float64)
    b = np.asarray(d_j, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return float(math.acos(min(1.0, max(-1.0, float(np.dot(a, b))))))


def cluster_directions(
    directions,
    epsilon: float,
    frame_ids=None,
) -> list[ViewCluster]:
    """Agglomerative clustering of unit directions under the angular
    metric, cut at diameter epsilon.

    Clusters merge closest-pair-first by complete linkage (the merge
    sequence does not depend on epsilon, so the cluster count is
    non-increasing in epsilon on any input) and stop once the next merge
    would exceed epsilon. A cluster of diameter <= epsilon keeps every
    member within epsilon of its normalized-mean center. Deterministic
    for a fixed input order; the representative defaults to the first
    (highest ranked) member.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dirs = [np.asarray(d, dtype=np.float64) for d in directions]
    dirs = [d / np.linalg.norm(d) for d in dirs]
    if frame_ids is None:
        frame_ids = list(range(len(dirs)))
    frame_ids = list(frame_ids)

    members: list[list[int]] = [[i] for i in range(len(dirs))]
    pairwise = [[angular_distance(a, b) for b in dirs] for a in dirs]

    def linkage(a: list[int], b: list[int]) -> float:
        return max(pairwise[i][j] for i in a for j in b)

    while len(members) > 1:
        best = None
        for ai in range(len(members)):
            for bi in range(ai + 1, len(members)):
                dist = linkage(members[ai], members[bi])
                if best is None or dist < best[0]:
                    best = (dist, ai, bi)
        if best[0] > epsilon:
            break
        _, ai, bi = best
        members[ai] = members[ai] + members[bi]
        del members[bi]

    clusters = []
    for group in sorted(members, key=min):
        group = sorted(group)
        center = np.mean([dirs[j] for j in group], axis=0)
        center = center / np.linalg.norm(center)
        ids = tuple(frame_ids[j] for j in group)
        clusters.append(ViewCluster(ids, center, ids[0]))
    return clusters


def back_project_mask(
    mask2d: np.ndarray,
    frame: CameraFrame,
    scene: Scene,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> np.ndarray:
    """Cloud indices whose projection lands on a true mask pixel and
    passes the same depth-consistency test as proposal_visibility."""
    mask2d = np.asarray(mask2d, dtype=bool)
    if mask2d.shape != (frame.height, frame.width):
        raise DimensionMismatch(
            f"mask {mask2d.shape} vs frame {(frame.height, frame.width)}"
        )
    all_indices = np.arange(scene.n_points, dtype=np.int64)
    visible, u, v = _visible_projection(all_indices, frame, scene, depth_tol)
    if visible.size == 0:
        return visible
    iu = np.floor(u).astype(np.int64)
    iv = np.floor(v).astype(np.int64)
    hit = mask2d[iv, iu]
    return visible[hit]


def fuse_views(per_view_sets, min_votes: int) -> np.ndarray:
    """Indices appearing in at least min_votes of the per-view sets."""
    if min_votes < 1:
        raise ValueError("min_votes must be >= 1")
    arrays = [np.asarray(s, dtype=np.int64) for s in per_view_sets]
    arrays = [a for a in arrays if a.size > 0]
    if not arrays:
        return np.empty(0, dtype=np.int64)
    stacked = np.concatenate(arrays)
    values, counts = np.unique(stacked, return_counts=True)
    return values[counts >= min_votes]


def majority_votes(n_views: int) -> int:
    return math.ceil(n_views / 2)


def denoise_points(
    indices,
    scene: Scene,
    k_neighbors: int = 10,
    std_ratio: float = 2.0,
) -> np.ndarray:
    """Statistical outlier removal over a cloud-index subset.

    Drops points whose mean distance to their k nearest neighbors within
    the subset exceeds (global mean + std_ratio * global std). Subsets of
    size <= k_neighbors are returned unchanged.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size <= k_neighbors:
        return indices
    mean_dist = kernels.knn_mean_distance(scene.points[indices], k_neighbors)
    threshold = mean_dist.mean() + std_ratio * mean_dist.std()
    return indices[mean_dist <= threshold]


def bbox_from_indices(indices, scene: Scene) -> Box3D:
    """Axis-aligned hull of the indexed cloud points."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise EmptySet("cannot build a box from zero points")
    return hull_box(scene.points[indices])


def best_visible_frame(
    proposal: Proposal3D,
    scene: Scene,
    min_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
    depth_tol: float = DEFAULT_DEPTH_TOL,
) -> Visibility:
    """Largest-area visible frame, or NoVisibleFrames."""
    ranked = rank_visible_frames(proposal, scene, min_fraction, depth_tol)
    if not ranked:
        raise NoVisibleFrames(f"proposal {proposal.proposal_id} is not visible anywhere")
    return ranked[0]
