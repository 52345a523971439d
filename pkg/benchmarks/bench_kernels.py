"""Benchmark the numba and pure-numpy kernel paths against each other.

Run:  python benchmarks/bench_kernels.py [--points 200000] [--repeat 5]

The numba path is compiled on first call; a warmup round keeps JIT cost
out of the timings. Set MCM_NUMBA=0 to confirm the package falls back to
the numpy path end to end.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ground3d import kernels


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--knn-points", type=int, default=4_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    points = rng.uniform(-4, 4, size=(args.points, 3))
    world_to_cam = np.eye(4)
    world_to_cam[:3, 3] = [0.3, -0.2, 4.5]
    fx = fy = 580.0
    cx, cy = 320.0, 240.0
    depth = rng.uniform(0.5, 9.0, size=(480, 640))
    u, v, z = kernels.project_points_numpy(points, world_to_cam, fx, fy, cx, cy)
    knn_pts = rng.normal(size=(args.knn_points, 3))
    px = rng.integers(0, 640, size=args.points)
    py = rng.integers(0, 480, size=args.points)
    heights = rng.uniform(0, 3, size=args.points)
    colors = rng.integers(0, 255, size=(args.points, 3)).astype(np.uint8)

    cases = [
        ("project_points",
         lambda: kernels.project_points_numpy(points, world_to_cam, fx, fy, cx, cy),
         lambda: kernels.project_points_numba(points, world_to_cam, fx, fy, cx, cy)),
        ("depth_consistent_mask",
         lambda: kernels.depth_consistent_mask_numpy(u, v, z, depth, 0.05),
         lambda: kernels.depth_consistent_mask_numba(u, v, z, depth, 0.05)),
        ("knn_mean_distance(k=10)",
         lambda: kernels.knn_mean_distance_numpy(knn_pts, 10),
         lambda: kernels.knn_mean_distance_numba(knn_pts, 10)),
        ("bev_paint",
         lambda: kernels.bev_paint_numpy(px, py, heights, colors, 640, 480),
         lambda: kernels.bev_paint_numba(px, py, heights, colors, 640, 480)),
    ]

    if not kernels._HAVE_NUMBA:
        print("numba is not importable; only the numpy path can run")

    print(f"{args.points} cloud points, {args.knn_points} knn points, "
          f"best of {args.repeat} runs\n")
    print(f"{'kernel':<26} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, numpy_fn, numba_fn in cases:
        t_np = timeit(numpy_fn, args.repeat)
        if kernels._HAVE_NUMBA:
            numba_fn()  # warmup / compile
            t_nb = timeit(numba_fn, args.repeat)
            print(f"{name:<26} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.2f}x")
        else:
            print(f"{name:<26} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
