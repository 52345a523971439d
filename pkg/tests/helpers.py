"""Shared scaffolding: in-memory scenes with self-rendered depth, and
fixture-scripting utilities for the mock backends."""

from __future__ import annotations

import json

import numpy as np

from ground3d import kernels, prompts
from ground3d.clients import (
    embed_image_request,
    embed_text_request,
    segment_by_points_request,
    segment_by_text_request,
    vlm_single_request,
)
from ground3d.alignment import best_view_crop
from ground3d.geometry import project_points, rank_visible_frames
from ground3d.masks import encode_rle
from ground3d.rectification import annotate_anchors, render_prompt_points
from ground3d.scene import CameraFrame, Intrinsics, Proposal3D, Scene, hull_box
from ground3d.synthetic import box_shell, look_at_pose, render_frame

STRIP_INTR = Intrinsics(fx=150.0, fy=150.0, cx=80.0, cy=60.0, width=160, height=120)


def build_scene(objects, camera_positions, target=(0.0, 0.0, 0.4),
                intr=STRIP_INTR, floor_half=3.2, scene_id="strip",
                extra_points=()):
    """Scene with 26-point box-shell objects over a sparse floor.

    objects: sequence of (category, center_xy, footprint, height).
    extra_points: (xyz, rgb) strays appended after the objects.
    Returns (scene, proposals) with one proposal per object.
    """
    points_list = []
    colors_list = []
    rng = np.random.default_rng(7)
    floor = np.array(
        [[x, y, 0.0]
         for x in np.arange(-floor_half, floor_half + 0.2, 0.4)
         for y in np.arange(-floor_half, floor_half + 0.2, 0.4)]
    )
    points_list.append(floor)
    colors_list.append(np.full((len(floor), 3), 180, dtype=np.uint8))
    slices = []
    offset = len(floor)
    for category, (cx, cy), footprint, height in objects:
        half = footprint / 2.0
        pts = box_shell([cx - half, cy - half, 0.05], [cx + half, cy + half, 0.05 + height])
        points_list.append(pts)
        colors_list.append(rng.integers(30, 220, size=3).astype(np.uint8) * np.ones((len(pts), 1), dtype=np.uint8))
        slices.append((category, offset, offset + len(pts)))
        offset += len(pts)
    for xyz, rgb in extra_points:
        points_list.append(np.asarray(xyz, dtype=np.float64).reshape(1, 3))
        colors_list.append(np.asarray(rgb, dtype=np.uint8).reshape(1, 3))
    points = np.concatenate(points_list)
    colors = np.concatenate(colors_list).astype(np.uint8)

    frames = []
    for i, pos in enumerate(camera_positions):
        pose = look_at_pose(pos, target)
        image, depth = render_frame(points, colors, pose, intr)
        frames.append(CameraFrame(i, image, depth, pose, intr))
    scene = Scene(scene_id, points, colors, tuple(frames))

    proposals = [
        Proposal3D(pid, np.arange(start, stop, dtype=np.int64),
                   hull_box(points[start:stop]), category, 0.9)
        for pid, (category, start, stop) in enumerate(slices)
    ]
    return scene, proposals


def script_parse_content(query, target, spatial_refs, top_categories):
    return {
        "content": json.dumps(
            {
                "query": query,
                "target_category": target,
                "spatial_refs": list(spatial_refs),
                "top_categories": list(top_categories),
            }
        )
    }


def script_crop_zeta(store, scene, proposals, config, text_by_category, zeta_by_pid):
    """Author embedding fixtures so the coarse similarity of proposal p
    equals zeta_by_pid[p] against its target's text embedding.

    text_by_category maps category name -> True when it may be used as a
    target; its text embedding is pinned to the first basis vector, and
    crop vectors are [zeta, sqrt(1 - zeta^2)].
    """
    for category, is_target in text_by_category.items():
        if is_target:
            store.put(embed_text_request(category), {"dimension": 2, "values": [1.0, 0.0]})
    for proposal in proposals:
        if proposal.proposal_id not in zeta_by_pid:
            continue
        z = zeta_by_pid[proposal.proposal_id]
        crop = best_view_crop(proposal, scene, config)
        store.put(
            embed_image_request(crop),
            {"dimension": 2, "values": [float(z), float(np.sqrt(max(0.0, 1 - z * z)))]},
        )


def iou_box_for(vis_box, iou):
    """A detection box with exactly the requested IoU against vis_box,
    built by shrinking the width while sharing three edges."""
    width = vis_box.x_max - vis_box.x_min
    return [vis_box.x_min, vis_box.y_min, vis_box.x_min + iou * width, vis_box.y_max]


def silhouette_mask(scene, frame, point_indices, depth_tol, extra_indices=()):
    """True-silhouette mask: pixels of depth-consistent projections of the
    given cloud indices (plus optional extra indices, e.g. a stray)."""
    mask = np.zeros((frame.height, frame.width), dtype=bool)
    for indices in (np.asarray(point_indices, dtype=np.int64),
                    np.asarray(extra_indices, dtype=np.int64)):
        if indices.size == 0:
            continue
        u, v, z = project_points(scene.points[indices], frame)
        ok = kernels.depth_consistent_mask(u, v, z, frame.depth, depth_tol)
        mask[np.floor(v[ok]).astype(int), np.floor(u[ok]).astype(int)] = True
    return mask


def norm_points_for_box(vis_box, frame):
    """Integer normalized [0-1000] coordinates: two positives (center and
    near the top-left corner), one negative outside the box."""
    cx = (vis_box.x_min + vis_box.x_max) / 2.0
    cy = (vis_box.y_min + vis_box.y_max) / 2.0

    def norm(x, y):
        return [int(round(x / frame.width * 1000)), int(round(y / frame.height * 1000))]

    positives = [norm(cx, cy), norm(vis_box.x_min + 1, vis_box.y_min + 1)]
    negatives = [norm(max(0.0, vis_box.x_min - 10), max(0.0, vis_box.y_min - 10))]
    return positives, negatives


def pixels_from_norm(norm_pairs, frame):
    """The exact pixel floats the client derives from normalized coords."""
    return tuple(
        (float(x) / 1000.0 * frame.width, float(y) / 1000.0 * frame.height)
        for x, y in norm_pairs
    )


def script_rectification_stages(
    store,
    scene,
    seed,
    all_proposals,
    parse,
    config,
    pass_frames,
    true_point_indices,
    stray_by_frame=None,
    stage3_fail_frames=(),
):
    """Author VLM/segmenter fixtures so the named frames survive all
    three stages and segment to the true silhouette of
    true_point_indices (optionally polluted by stray indices)."""
    stray_by_frame = stray_by_frame or {}
    anchors = sorted(
        (p for p in all_proposals if p.category in parse.spatial_refs),
        key=lambda p: p.proposal_id,
    )
    ranked = rank_visible_frames(seed, scene, config.min_visible_fraction, config.depth_tol_m)
    vis_by_frame = {v.frame_id: v for v in ranked}
    for vis in ranked[: config.k_v]:
        frame_id = vis.frame_id
        frame = scene.frame_by_id(frame_id)
        if anchors:
            img, descriptions = annotate_anchors(
                frame.image, anchors, scene, frame_id, config.depth_tol_m
            )
            anchor_text = prompts.format_anchor_descriptions(descriptions)
        else:
            img, anchor_text = frame.image, ""
        if frame_id not in pass_frames:
            continue  # mock defaults (No / false) drop this frame
        if parse.spatial_refs:
            store.put(
                vlm_single_request(
                    "presence_check", prompts.build_presence_prompt(parse.query, anchor_text),
                    img, 0,
                ),
                {"content": json.dumps({"Presence": "Yes", "point": [5, 5],
                                        "confidence": 0.9, "Reasoning": "anchored"})},
            )
        positives_n, negatives_n = norm_points_for_box(vis_by_frame[frame_id].bbox2d, frame)
        store.put(
            vlm_single_request(
                "point_prompt", prompts.build_point_prompt(parse.query, anchor_text), img, 0
            ),
            {"content": json.dumps({
                "Presence": "Yes",
                "positive_points": positives_n,
                "negative_points": negatives_n,
                "confidence": 0.85,
                "Reasoning": "target located",
            })},
        )
        pos_px = pixels_from_norm(positives_n, frame)
        neg_px = pixels_from_norm(negatives_n, frame)
        dotted = render_prompt_points(img, pos_px, neg_px)
        verdict = frame_id not in stage3_fail_frames
        store.put(
            vlm_single_request(
                "verify_points", prompts.build_verify_prompt(parse.query, anchor_text), dotted, 0
            ),
            {"content": json.dumps({"query_match": verdict, "target_object": seed.category,
                                    "reasoning": "checked the dots"})},
        )
        if not verdict:
            continue
        mask = silhouette_mask(scene, frame, true_point_indices, config.depth_tol_m,
                               extra_indices=stray_by_frame.get(frame_id, ()))
        box = vis_by_frame[frame_id].bbox2d
        store.put(
            segment_by_points_request(frame.image, pos_px, neg_px),
            {"detections": [{
                "box": [box.x_min, box.y_min, box.x_max, box.y_max],
                "score": 0.95,
                "mask_rle": encode_rle(mask),
            }]},
        )


def script_fine_detections(store, scene, config, target, spec_by_pid, proposals):
    """Author segment_by_text fixtures.

    spec_by_pid: proposal_id -> list of (frame_rank, iou, score); each
    touched frame's fixture carries one detection per (proposal, entry).
    Frames not named keep the mock default (no detections).
    """
    per_frame: dict[int, list] = {}
    for proposal in proposals:
        entries = spec_by_pid.get(proposal.proposal_id)
        if not entries:
            continue
        ranked = rank_visible_frames(proposal, scene, config.min_visible_fraction,
                                     config.depth_tol_m)
        for frame_rank, iou, score in entries:
            vis = ranked[frame_rank]
            per_frame.setdefault(vis.frame_id, []).append(
                {"box": iou_box_for(vis.bbox2d, iou), "score": score}
            )
    for frame_id, detections in per_frame.items():
        frame = scene.frame_by_id(frame_id)
        store.put(segment_by_text_request(frame.image, target), {"detections": detections})
