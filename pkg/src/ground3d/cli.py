"""Command-line surface.

Subcommands::

    ground3d ground --scene DIR --query TEXT [--config FILE] [--trace DIR] [--out FILE]
    ground3d eval --scenes DIR --refs FILE [--config FILE] [--out FILE] [--workers N]
    ground3d render-bev --scene DIR [--highlight IDS] [--frame ID] --out FILE
    ground3d inspect --scene DIR

Exit codes: 0 success, 1 usage error, 2 pipeline error. Model backends
are configured through the MCM_* environment variables (see clients).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .clients import ModelServices
from .config import load_config
from .errors import Ground3dError
from .evaluation import evaluate, load_references
from .pipeline import result_to_json, run_grounding
from .rendering import save_png
from .scene import GroundingQuery, load_proposals, load_scene_bundle
from .viewpoint import STATUS_ERROR, render_bev


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--epsilon-degrees", type=float, dest="epsilon_degrees")
    parser.add_argument("--k-v", type=int, dest="k_v")
    parser.add_argument("--batch-limit", type=int, dest="batch_limit")
    parser.add_argument("--depth-tol", type=float, dest="depth_tol_m")


def _config_from_args(args):
    overrides = {
        key: getattr(args, key, None)
        for key in ("gamma", "epsilon_degrees", "k_v", "batch_limit", "depth_tol_m")
    }
    return load_config(args.config, overrides)


def _load_scene_and_proposals(scene_dir):
    scene = load_scene_bundle(scene_dir)
    proposals = load_proposals(Path(scene_dir) / "proposals.json", scene)
    return scene, proposals


def _write_or_print(payload: dict, out_path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n")
    else:
        print(text)


def cmd_ground(args) -> int:
    config = _config_from_args(args)
    scene, proposals = _load_scene_and_proposals(args.scene)
    services = ModelServices.from_env()
    result = run_grounding(
        scene, proposals, GroundingQuery(args.query, scene.scene_id),
        services, config, trace_dir=args.trace,
    )
    _write_or_print(result_to_json(result, args.trace), args.out)
    return 2 if result.status == STATUS_ERROR else 0


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    references = load_references(args.refs)
    services = ModelServices.from_env()
    scenes = {}
    for ref in references:
        if ref.scene_id not in scenes:
            scenes[ref.scene_id] = _load_scene_and_proposals(Path(args.scenes) / ref.scene_id)

    def run_one(ref):
        scene, proposals = scenes[ref.scene_id]
        return run_grounding(
            scene, proposals, GroundingQuery(ref.query, ref.scene_id), services, config
        )

    workers = args.workers or config.eval_workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, references))
    else:
        results = [run_one(ref) for ref in references]
    report = evaluate(zip(results, references))
    _write_or_print(report.to_json(), args.out)
    return 0


def cmd_render_bev(args) -> int:
    scene, proposals = _load_scene_and_proposals(args.scene)
    highlights = []
    if args.highlight:
        wanted = {int(token) for token in args.highlight.split(",")}
        highlights = [(p.proposal_id, p.box) for p in proposals if p.proposal_id in wanted]
    camera = scene.frame_by_id(args.frame)
    img = render_bev(scene, highlights, camera)
    save_png(img, args.out)
    print(f"wrote {img.shape[1]}x{img.shape[0]} BEV to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    scene, proposals = _load_scene_and_proposals(args.scene)
    print(f"scene {scene.scene_id}: {scene.n_points} points, {len(scene.frames)} frames")
    print(f"{'id':>4}  {'category':<16} {'conf':>5}  {'points':>7}  box (lo .. hi)")
    for p in proposals:
        lo = ", ".join(f"{v:.2f}" for v in p.box.lo)
        hi = ", ".join(f"{v:.2f}" for v in p.box.hi)
        print(
            f"{p.proposal_id:>4}  {p.category:<16} {p.confidence:>5.2f}  "
            f"{p.point_indices.size:>7}  ({lo}) .. ({hi})"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ground3d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_ground = sub.add_parser("ground", help="ground one query in a scene bundle")
    p_ground.add_argument("--scene", required=True, help="scene bundle directory")
    p_ground.add_argument("--query", required=True)
    p_ground.add_argument("--trace", help="directory for debug artifacts")
    p_ground.add_argument("--out", help="write the result JSON here instead of stdout")
    _add_config_flags(p_ground)
    p_ground.set_defaults(func=cmd_ground)

    p_eval = sub.add_parser("eval", help="run a references file and report accuracies")
    p_eval.add_argument("--scenes", required=True, help="directory of per-scene bundles")
    p_eval.add_argument("--refs", required=True, help="JSON references file")
    p_eval.add_argument("--out")
    p_eval.add_argument("--workers", type=int, default=0)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_bev = sub.add_parser("render-bev", help="render the scene's top-down map")
    p_bev.add_argument("--scene", required=True)
    p_bev.add_argument("--highlight", help="comma-separated proposal ids")
    p_bev.add_argument("--frame", type=int, default=0, help="camera frame to mark")
    p_bev.add_argument("--out", required=True)
    p_bev.set_defaults(func=cmd_render_bev)

    p_inspect = sub.add_parser("inspect", help="print the proposal table")
    p_inspect.add_argument("--scene", required=True)
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; our contract says 1
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (Ground3dError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
