"""Scene data model: point cloud, posed RGB-D frames, and 3D proposals.

A scene bundle is a directory with a ``manifest.json`` naming the cloud
and per-frame rasters:

* ``cloud.ply``            ASCII PLY, x y z (float, meters) red green blue (uchar)
* ``frame_<id>.png``       RGB raster
* ``depth_<id>.png``       16-bit grayscale PNG, value = millimeters, 0 = invalid
* ``pose_<id>.txt``        16 whitespace-separated floats, row-major 4x4 camera-to-world
* ``intrinsics.json``      {fx, fy, cx, cy, width, height}, shared or per-frame
* ``proposals.json``       [{proposal_id, category, confidence, point_indices}]

Scenes and proposals are immutable after load and safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DepthMismatch,
    EmptyMask,
    IndexOutOfRange,
    MalformedPose,
    MissingFile,
    SceneBundleError,
)

ROTATION_TOL = 1e-5

# Proposal lifecycle states.
STATE_INITIAL = "initial"
STATE_MATCHED = "matched"
STATE_SALVAGED = "salvaged"
STATE_RECTIFIED = "rectified"
STATE_DISCARDED = "discarded"


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass(frozen=True)
class CameraFrame:
    """A posed RGB-D observation.

    image is uint8 (H, W, 3); depth is float32 (H, W) meters with 0 marking
    an invalid measurement; pose is the 4x4 camera-to-world transform.
    """

    frame_id: int
    image: np.ndarray
    depth: np.ndarray
    pose: np.ndarray
    intrinsics: Intrinsics

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    def world_to_camera(self) -> np.ndarray:
        """Invert the rigid camera-to-world pose."""
        rot = self.pose[:3, :3]
        trans = self.pose[:3, 3]
        out = np.eye(4)
        out[:3, :3] = rot.T
        out[:3, 3] = -rot.T @ trans
        return out

    def camera_position(self) -> np.ndarray:
        return self.pose[:3, 3].copy()

    def optical_axis(self) -> np.ndarray:
        """World-frame direction of the camera's +z (look) axis."""
        return self.pose[:3, 2].copy()


@dataclass(frozen=True)
class Scene:
    scene_id: str
    points: np.ndarray  # (N, 3) float64 meters
    colors: np.ndarray  # (N, 3) uint8
    frames: tuple[CameraFrame, ...]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def frame_by_id(self, frame_id: int) -> CameraFrame:
        for frame in self.frames:
            if frame.frame_id == frame_id:
                return frame
        raise KeyError(f"no frame with id {frame_id}")


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned box, meters. lo <= hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"box lo {lo} exceeds hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    def to_json(self) -> dict:
        return {"min": [float(x) for x in self.lo], "max": [float(x) for x in self.hi]}

    @classmethod
    def from_json(cls, obj: dict) -> "Box3D":
        return cls(np.asarray(obj["min"], dtype=np.float64), np.asarray(obj["max"], dtype=np.float64))


@dataclass(frozen=True)
class Proposal3D:
    """A candidate 3D instance: point-index mask, hull box, category."""

    proposal_id: int
    point_indices: np.ndarray  # sorted unique int64 indices into Scene.points
    box: Box3D
    category: str
    confidence: float
    state: str = STATE_INITIAL

    def centroid(self, scene: Scene) -> np.ndarray:
        return scene.points[self.point_indices].mean(axis=0)

    def with_state(self, state: str, category: str | None = None) -> "Proposal3D":
        if category is None:
            return replace(self, state=state)
        return replace(self, state=state, category=category)


@dataclass(frozen=True)
class GroundingQuery:
    text: str
    scene_id: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")


def hull_box(points: np.ndarray) -> Box3D:
    """Axis-aligned hull of an (N, 3) point array."""
    return Box3D(points.min(axis=0), points.max(axis=0))


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFile(path)
    return path


def _read_ascii_ply(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse the bundle's ASCII PLY layout into (points, colors)."""
    with open(path, "r") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise SceneBundleError(f"{path}: not a PLY file")
        n_vertices = None
        prop_names: list[str] = []
        while True:
            line = fh.readline()
            if not line:
                raise SceneBundleError(f"{path}: truncated PLY header")
            line = line.strip()
            if line.startswith("element vertex"):
                n_vertices = int(line.split()[-1])
                prop_names = []
            elif line.startswith("property") and n_vertices is not None:
                prop_names.append(line.split()[-1])
            elif line == "end_header":
                break
        if n_vertices is None:
            raise SceneBundleError(f"{path}: PLY header lacks a vertex element")
        needed = ("x", "y", "z", "red", "green", "blue")
        try:
            cols = [prop_names.index(name) for name in needed]
        except ValueError as exc:
            raise SceneBundleError(f"{path}: PLY vertex needs x y z red green blue") from exc
        rows = np.loadtxt(fh, dtype=np.float64, max_rows=n_vertices, ndmin=2)
        if rows.shape[0] != n_vertices:
            raise SceneBundleError(
                f"{path}: expected {n_vertices} vertices, found {rows.shape[0]}"
            )
    points = rows[:, cols[:3]].astype(np.float64)
    colors = rows[:, cols[3:]].round().clip(0, 255).astype(np.uint8)
    return points, colors


def _read_pose(path: Path) -> np.ndarray:
    values = np.loadtxt(path, dtype=np.float64).reshape(-1)
    if values.size != 16:
        raise MalformedPose(f"{path}: expected 16 floats, found {values.size}")
    pose = values.reshape(4, 4)
    rot = pose[:3, :3]
    if not np.allclose(rot @ rot.T, np.eye(3), atol=ROTATION_TOL):
        raise MalformedPose(f"{path}: rotation block is not orthonormal")
    if np.linalg.det(rot) < 0:
        raise MalformedPose(f"{path}: rotation block has negative determinant")
    return pose


def _read_depth_png(path: Path) -> np.ndarray:
    raw = np.asarray(Image.open(path))
    if raw.ndim != 2:
        raise SceneBundleError(f"{path}: depth PNG must be single-channel")
    return raw.astype(np.float32) / 1000.0


def _read_rgb_png(path: Path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def load_scene_bundle(path) -> Scene:
    """Load and validate a scene bundle directory."""
    root = Path(path)
    manifest_path = _require(root / "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)

    points, colors = _read_ascii_ply(_require(root / manifest["cloud"]))
    if points.shape[0] < 1:
        raise SceneBundleError(f"{root}: point cloud is empty")

    frames = []
    for entry in manifest["frames"]:
        image = _read_rgb_png(_require(root / entry["image"]))
        depth = _read_depth_png(_require(root / entry["depth"]))
        if depth.shape != image.shape[:2]:
            raise DepthMismatch(
                f"frame {entry['id']}: depth {depth.shape} vs image {image.shape[:2]}"
            )
        pose = _read_pose(_require(root / entry["pose"]))
        with open(_require(root / entry["intrinsics"])) as fh:
            intr_raw = json.load(fh)
        intr = Intrinsics(
            fx=float(intr_raw["fx"]),
            fy=float(intr_raw["fy"]),
            cx=float(intr_raw["cx"]),
            cy=float(intr_raw["cy"]),
            width=int(intr_raw["width"]),
            height=int(intr_raw["height"]),
        )
        if intr.fx <= 0 or intr.fy <= 0:
            raise SceneBundleError(f"frame {entry['id']}: non-positive focal length")
        if (intr.width, intr.height) != (image.shape[1], image.shape[0]):
            raise SceneBundleError(
                f"frame {entry['id']}: intrinsics size {(intr.width, intr.height)} "
                f"vs image {(image.shape[1], image.shape[0])}"
            )
        image.setflags(write=False)
        depth.setflags(write=False)
        pose.setflags(write=False)
        frames.append(CameraFrame(int(entry["id"]), image, depth, pose, intr))

    points.setflags(write=False)
    colors.setflags(write=False)
    return Scene(
        scene_id=str(manifest["scene_id"]),
        points=points,
        colors=colors,
        frames=tuple(frames),
    )


def load_proposals(path, scene: Scene) -> list[Proposal3D]:
    """Load 3D proposals, recomputing each box as the hull of its mask.

    The file's box, if present, is ignored: recomputation guarantees the
    hull invariant regardless of the producer.
    """
    with open(_require(Path(path))) as fh:
        entries = json.load(fh)
    proposals = []
    for entry in entries:
        indices = np.asarray(sorted(set(int(i) for i in entry["point_indices"])), dtype=np.int64)
        if indices.size == 0:
            raise EmptyMask(f"proposal {entry['proposal_id']}: empty point mask")
        if indices[0] < 0 or indices[-1] >= scene.n_points:
            raise IndexOutOfRange(
                f"proposal {entry['proposal_id']}: index outside [0, {scene.n_points})"
            )
        indices.setflags(write=False)
        proposals.append(
            Proposal3D(
                proposal_id=int(entry["proposal_id"]),
                point_indices=indices,
                box=hull_box(scene.points[indices]),
                category=str(entry["category"]),
                confidence=float(entry.get("confidence", 1.0)),
            )
        )
    return proposals


def scene_category_list(proposals) -> list[str]:
    """Distinct proposal categories in lexicographic order."""
    return sorted({p.category for p in proposals})
