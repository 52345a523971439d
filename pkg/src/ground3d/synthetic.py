"""Synthetic scene bundles for testing and demos.

Builds point-cloud rooms whose depth maps are rendered from the cloud
itself (z-buffer splatting), so projection, occlusion, and
back-projection behave exactly as the geometry predicts. Run
``python -m ground3d.synthetic OUT_DIR`` to write a demo bundle.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .kernels import MIN_FORWARD_Z, project_points
from .scene import Intrinsics


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose for a camera at position looking at target.

    Camera axes: +z forward, +x right, +y down (image row direction).
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = position
    return pose


def render_frame(points, colors, pose, intrinsics: Intrinsics):
    """Z-buffer splat of the cloud into (rgb, depth_m) rasters.

    Background pixels are white with depth 0 (no measurement).
    """
    width, height = intrinsics.width, intrinsics.height
    world_to_cam = np.eye(4)
    rot = pose[:3, :3]
    world_to_cam[:3, :3] = rot.T
    world_to_cam[:3, 3] = -rot.T @ pose[:3, 3]
    u, v, z = project_points(
        np.asarray(points, dtype=np.float64), world_to_cam,
        intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
    )
    ok = (z > MIN_FORWARD_Z) & (u >= 0) & (u < width) & (v >= 0) & (v < height)
    image = np.full((height, width, 3), 255, dtype=np.uint8)
    depth = np.zeros((height, width), dtype=np.float64)
    idx = np.nonzero(ok)[0]
    if idx.size:
        iu = np.floor(u[idx]).astype(np.int64)
        iv = np.floor(v[idx]).astype(np.int64)
        flat = iv * width + iu
        order = np.lexsort((z[idx], flat))
        first = np.empty(order.size, dtype=bool)
        sorted_flat = flat[order]
        first[0] = True
        first[1:] = sorted_flat[1:] != sorted_flat[:-1]
        win = idx[order[first]]
        wu = np.floor(u[win]).astype(np.int64)
        wv = np.floor(v[win]).astype(np.int64)
        image[wv, wu] = np.asarray(colors, dtype=np.uint8)[win]
        depth[wv, wu] = z[win]
    return image, depth


def box_shell(lo, hi) -> np.ndarray:
    """26 surface points of an axis-aligned box: 8 corners, 12 edge
    midpoints, 6 face centers."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    mid = (lo + hi) / 2.0
    levels = [lo, mid, hi]
    pts = []
    for ix in range(3):
        for iy in range(3):
            for iz in range(3):
                if ix == 1 and iy == 1 and iz == 1:
                    continue  # interior center
                pts.append([levels[ix][0], levels[iy][1], levels[iz][2]])
    return np.asarray(pts)


def floor_grid(half_extent: float, step: float, z: float = 0.0):
    """Deterministic checkerboard-ish floor points and colors."""
    coords = np.arange(-half_extent, half_extent + step / 2, step)
    xs, ys = np.meshgrid(coords, coords)
    points = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)], axis=1)
    parity = ((xs.ravel() / step).round() + (ys.ravel() / step).round()).astype(int) % 2
    shade = np.where(parity == 0, 170, 190).astype(np.uint8)
    colors = np.stack([shade, shade, shade], axis=1)
    return points, colors


def write_bundle(
    out_dir,
    scene_id: str,
    points: np.ndarray,
    colors: np.ndarray,
    cameras,  # iterable of (pose, Intrinsics)
    proposals,  # iterable of {"proposal_id", "category", "confidence", "point_indices"}
) -> Path:
    """Write a complete scene bundle directory and return its path."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    with open(root / "cloud.ply", "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for p, c in zip(points, colors):
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(c[0])} {int(c[1])} {int(c[2])}\n")

    cameras = list(cameras)
    shared_intrinsics = len({cam[1] for cam in cameras}) == 1

    def dump_intrinsics(name, intr):
        with open(root / name, "w") as fh:
            json.dump(
                {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                 "width": intr.width, "height": intr.height},
                fh,
            )

    if shared_intrinsics and cameras:
        dump_intrinsics("intrinsics.json", cameras[0][1])

    frames_manifest = []
    for frame_id, (pose, intr) in enumerate(cameras):
        image, depth = render_frame(points, colors, pose, intr)
        Image.fromarray(image).save(root / f"frame_{frame_id}.png")
        depth_mm = np.round(depth * 1000.0).astype(np.uint16)
        Image.fromarray(depth_mm).save(root / f"depth_{frame_id}.png")
        np.savetxt(root / f"pose_{frame_id}.txt", pose.reshape(1, 16), fmt="%.9f")
        if shared_intrinsics:
            intr_name = "intrinsics.json"
        else:
            intr_name = f"intrinsics_{frame_id}.json"
            dump_intrinsics(intr_name, intr)
        frames_manifest.append(
            {
                "id": frame_id,
                "image": f"frame_{frame_id}.png",
                "depth": f"depth_{frame_id}.png",
                "pose": f"pose_{frame_id}.txt",
                "intrinsics": intr_name,
            }
        )

    with open(root / "manifest.json", "w") as fh:
        json.dump({"scene_id": scene_id, "cloud": "cloud.ply", "frames": frames_manifest}, fh, indent=2)
    with open(root / "proposals.json", "w") as fh:
        json.dump(list(proposals), fh, indent=2)
    return root


# --- the standard test room ---------------------------------------------------

ROOM_OBJECTS = [
    # (category, center_xy, footprint, height, rgb)
    ("armchair", (-1.5, -1.5), 0.50, 0.55, (180, 40, 40)),
    ("bed", (0.0, -1.6), 0.80, 0.45, (40, 90, 180)),
    ("bookshelf", (1.5, -1.5), 0.45, 0.90, (120, 80, 30)),
    ("cabinet", (-1.6, 0.0), 0.50, 0.70, (60, 140, 60)),
    ("chair", (0.3, -0.4), 0.45, 0.50, (200, 60, 20)),
    ("desk", (1.6, 0.0), 0.60, 0.50, (90, 60, 140)),
    ("lamp", (-1.2, 1.2), 0.30, 0.80, (230, 200, 40)),
    ("monitor", (0.0, 1.5), 0.40, 0.35, (30, 30, 30)),
    ("sofa", (1.4, 1.4), 0.70, 0.45, (20, 150, 150)),
    ("stool", (-0.5, 0.6), 0.35, 0.35, (150, 150, 20)),
    ("table", (0.8, 0.8), 0.60, 0.40, (140, 90, 50)),
    ("trash can", (-0.3, -0.9), 0.30, 0.40, (80, 80, 90)),
    ("chair", (-0.9, -0.3), 0.45, 0.50, (210, 110, 40)),
    ("table", (-0.6, 1.6), 0.60, 0.40, (110, 70, 35)),
]

ROOM_CAMERA_POSITIONS = [
    (2.8, 0.2, 1.9),
    (2.0, 2.1, 1.9),
    (0.1, 2.8, 1.9),
    (-2.8, 0.4, 1.9),
    (-2.1, -2.0, 1.9),
    (0.3, -2.8, 1.9),
]

ROOM_INTRINSICS = Intrinsics(fx=170.0, fy=170.0, cx=100.0, cy=75.0, width=200, height=150)


def room_geometry():
    """Cloud, colors, per-object point index ranges, and true boxes."""
    points_list = []
    colors_list = []
    object_slices = []
    true_boxes = []
    floor_pts, floor_cols = floor_grid(2.4, 0.3)
    # a scanner cannot see the floor underneath an object
    covered = np.zeros(len(floor_pts), dtype=bool)
    for _, (cx, cy), footprint, _, _ in ROOM_OBJECTS:
        half = footprint / 2.0 + 0.05
        covered |= (
            (np.abs(floor_pts[:, 0] - cx) <= half) & (np.abs(floor_pts[:, 1] - cy) <= half)
        )
    floor_pts, floor_cols = floor_pts[~covered], floor_cols[~covered]
    points_list.append(floor_pts)
    colors_list.append(floor_cols)
    offset = len(floor_pts)
    for category, (cx, cy), footprint, height, rgb in ROOM_OBJECTS:
        half = footprint / 2.0
        lo = np.array([cx - half, cy - half, 0.02])
        hi = np.array([cx + half, cy + half, 0.02 + height])
        pts = box_shell(lo, hi)
        points_list.append(pts)
        colors_list.append(np.tile(np.asarray(rgb, dtype=np.uint8), (len(pts), 1)))
        object_slices.append((category, offset, offset + len(pts)))
        true_boxes.append((lo, hi))
        offset += len(pts)
    points = np.concatenate(points_list)
    colors = np.concatenate(colors_list)
    return points, colors, object_slices, true_boxes


def room_cameras():
    target = (0.0, 0.0, 0.25)
    return [(look_at_pose(pos, target), ROOM_INTRINSICS) for pos in ROOM_CAMERA_POSITIONS]


def build_room_bundle(out_dir, scene_id: str = "room0", corrupt_categories=()) -> Path:
    """Write the standard multi-object room.

    Proposals cover every object; for categories named in
    corrupt_categories the proposal keeps only a shrunken subset of the
    object's points (bad upstream geometry), so its hull underestimates
    the true box.
    """
    points, colors, object_slices, _ = room_geometry()
    proposals = []
    corrupt_remaining = set(corrupt_categories)
    for pid, (category, start, stop) in enumerate(object_slices):
        indices = list(range(start, stop))
        if category in corrupt_remaining:
            # truncated segmentation: only the object's lower half made it
            # into the mask, so the recomputed hull underestimates height
            obj_pts = points[start:stop]
            z_mid = (obj_pts[:, 2].min() + obj_pts[:, 2].max()) / 2.0
            indices = [start + i for i, p in enumerate(obj_pts) if p[2] < z_mid]
            corrupt_remaining.discard(category)
        proposals.append(
            {
                "proposal_id": pid,
                "category": category,
                "confidence": 0.9,
                "point_indices": indices,
            }
        )
    return write_bundle(out_dir, scene_id, points, colors, room_cameras(), proposals)


def build_cube_bundle(out_dir, scene_id: str = "cube0") -> Path:
    """Unit cube of 8 corner points, viewed by two oblique cameras."""
    corners = np.array(
        [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    )
    colors = np.tile(np.array([200, 50, 50], dtype=np.uint8), (8, 1))
    intr = Intrinsics(fx=160.0, fy=160.0, cx=80.0, cy=60.0, width=160, height=120)
    cameras = [
        (look_at_pose((3.0, -1.5, 2.2), (0.5, 0.5, 0.5)), intr),
        (look_at_pose((-1.8, 2.8, 2.0), (0.5, 0.5, 0.5)), intr),
    ]
    proposals = [
        {"proposal_id": 0, "category": "crate", "confidence": 1.0,
         "point_indices": list(range(8))}
    ]
    return write_bundle(out_dir, scene_id, corners, colors, cameras, proposals)


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="write a synthetic demo scene bundle")
    parser.add_argument("out_dir")
    parser.add_argument("--kind", choices=("room", "cube"), default="room")
    args = parser.parse_args(argv)
    if args.kind == "room":
        path = build_room_bundle(args.out_dir)
    else:
        path = build_cube_bundle(args.out_dir)
    print(f"wrote bundle to {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
