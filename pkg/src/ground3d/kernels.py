"""Hot numeric kernels with numba and pure-numpy implementations.

Every kernel has two interchangeable implementations: a numba ``@njit``
loop and a vectorized numpy path. The active path is chosen once at import
from the ``MCM_NUMBA`` environment variable (default: numba when the
import succeeds; set ``MCM_NUMBA=0`` to force numpy). Both paths are kept
callable so the benchmark in ``benchmarks/bench_kernels.py`` can compare
them, and tests assert they agree.

All kernels treat a camera-space z below ``MIN_FORWARD_Z`` as "behind the
camera" and a depth-map value of 0 as "no measurement".
"""

from __future__ import annotations

import os

import numpy as np

MIN_FORWARD_Z = 1e-6

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_wants_numba() -> bool:
    flag = os.environ.get("MCM_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    return True


NUMBA_ENABLED = _HAVE_NUMBA and _env_wants_numba()


# --- pinhole projection ------------------------------------------------------

def project_points_numpy(points, world_to_cam, fx, fy, cx, cy):
    """Project world points through a pinhole camera.

    Returns (u, v, z) float64 arrays. Entries with z <= MIN_FORWARD_Z are
    behind the camera; their (u, v) values are meaningless and must be
    masked by the caller.
    """
    rot = world_to_cam[:3, :3]
    trans = world_to_cam[:3, 3]
    cam = points @ rot.T + trans
    z = cam[:, 2]
    safe_z = np.where(z > MIN_FORWARD_Z, z, 1.0)
    u = fx * cam[:, 0] / safe_z + cx
    v = fy * cam[:, 1] / safe_z + cy
    return u, v, z


@njit(cache=True)
def _project_points_jit(points, world_to_cam, fx, fy, cx, cy):  # pragma: no cover
    n = points.shape[0]
    u = np.empty(n, np.float64)
    v = np.empty(n, np.float64)
    z = np.empty(n, np.float64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        x = world_to_cam[0, 0] * px + world_to_cam[0, 1] * py + world_to_cam[0, 2] * pz + world_to_cam[0, 3]
        y = world_to_cam[1, 0] * px + world_to_cam[1, 1] * py + world_to_cam[1, 2] * pz + world_to_cam[1, 3]
        w = world_to_cam[2, 0] * px + world_to_cam[2, 1] * py + world_to_cam[2, 2] * pz + world_to_cam[2, 3]
        z[i] = w
        if w > MIN_FORWARD_Z:
            u[i] = fx * x / w + cx
            v[i] = fy * y / w + cy
        else:
            u[i] = 0.0
            v[i] = 0.0
    return u, v, z


def project_points_numba(points, world_to_cam, fx, fy, cx, cy):
    return _project_points_jit(
        np.ascontiguousarray(points, np.float64),
        np.ascontiguousarray(world_to_cam, np.float64),
        float(fx), float(fy), float(cx), float(cy),
    )


def project_points(points, world_to_cam, fx, fy, cx, cy):
    if NUMBA_ENABLED:
        return project_points_numba(points, world_to_cam, fx, fy, cx, cy)
    return project_points_numpy(points, world_to_cam, fx, fy, cx, cy)


# --- depth-consistent visibility ---------------------------------------------

def depth_consistent_mask_numpy(u, v, z, depth, depth_tol):
    """True where a projection is in front, in-bounds, on a valid depth
    pixel, and within depth_tol of the measured depth."""
    height, width = depth.shape
    ok = (z > MIN_FORWARD_Z) & (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    out = np.zeros(u.shape[0], dtype=np.bool_)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return out
    iu = np.floor(u[idx]).astype(np.int64)
    iv = np.floor(v[idx]).astype(np.int64)
    measured = depth[iv, iu]
    good = (measured > 0.0) & (np.abs(z[idx] - measured) <= depth_tol)
    out[idx[good]] = True
    return out


@njit(cache=True)
def _depth_consistent_mask_jit(u, v, z, depth, depth_tol):  # pragma: no cover
    height, width = depth.shape
    n = u.shape[0]
    out = np.zeros(n, np.bool_)
    for i in range(n):
        if z[i] <= MIN_FORWARD_Z:
            continue
        if u[i] < 0.0 or u[i] >= width or v[i] < 0.0 or v[i] >= height:
            continue
        iu = int(np.floor(u[i]))
        iv = int(np.floor(v[i]))
        measured = depth[iv, iu]
        if measured > 0.0 and abs(z[i] - measured) <= depth_tol:
            out[i] = True
    return out


def depth_consistent_mask_numba(u, v, z, depth, depth_tol):
    return _depth_consistent_mask_jit(
        np.ascontiguousarray(u, np.float64),
        np.ascontiguousarray(v, np.float64),
        np.ascontiguousarray(z, np.float64),
        np.ascontiguousarray(depth, np.float64),
        float(depth_tol),
    )


def depth_consistent_mask(u, v, z, depth, depth_tol):
    if NUMBA_ENABLED:
        return depth_consistent_mask_numba(u, v, z, depth, depth_tol)
    return depth_consistent_mask_numpy(u, v, z, depth, depth_tol)


# --- k-NN mean distance --------------------------------------------------------

def knn_mean_distance_numpy(points, k):
    """Mean Euclidean distance from each point to its k nearest neighbors
    (self excluded). k must be < len(points)."""
    n = points.shape[0]
    out = np.empty(n, np.float64)
    block = max(1, min(n, int(2**22 // max(n, 1))))
    sq = np.sum(points * points, axis=1)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (points[start:stop] @ points.T)
        np.maximum(d2, 0.0, out=d2)
        rows = np.arange(start, stop)
        d2[rows - start, rows] = np.inf
        nearest = np.partition(d2, k - 1, axis=1)[:, :k]
        out[start:stop] = np.sqrt(nearest).mean(axis=1)
    return out


@njit(cache=True)
def _knn_mean_distance_jit(points, k):  # pragma: no cover
    n = points.shape[0]
    out = np.empty(n, np.float64)
    best = np.empty(k, np.float64)
    for i in range(n):
        for j in range(k):
            best[j] = np.inf
        for j in range(n):
            if j == i:
                continue
            dx = points[i, 0] - points[j, 0]
            dy = points[i, 1] - points[j, 1]
            dz = points[i, 2] - points[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            # replace the current worst of the k best when closer
            worst = 0
            for m in range(1, k):
                if best[m] > best[worst]:
                    worst = m
            if d2 < best[worst]:
                best[worst] = d2
        total = 0.0
        for m in range(k):
            total += np.sqrt(best[m])
        out[i] = total / k
    return out


def knn_mean_distance_numba(points, k):
    return _knn_mean_distance_jit(np.ascontiguousarray(points, np.float64), int(k))


def knn_mean_distance(points, k):
    if NUMBA_ENABLED:
        return knn_mean_distance_numba(points, k)
    return knn_mean_distance_numpy(points, k)


# --- top-z BEV rasterization ----------------------------------------------------

def bev_paint_numpy(px, py, z, colors, width, height):
    """Paint points onto a white (height, width, 3) canvas, keeping per
    pixel the color of the highest-z point (ties: lowest point index).
    Points outside the canvas are ignored."""
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    inside = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    if not np.any(inside):
        return img
    px = px[inside]
    py = py[inside]
    z = z[inside]
    colors = colors[inside]
    flat = py.astype(np.int64) * width + px.astype(np.int64)
    n = flat.shape[0]
    order = np.lexsort((-np.arange(n), z, flat))
    sorted_flat = flat[order]
    last = np.empty(n, dtype=bool)
    last[:-1] = sorted_flat[:-1] != sorted_flat[1:]
    last[-1] = True
    winners = order[last]
    img[py[winners], px[winners]] = colors[winners]
    return img


@njit(cache=True)
def _bev_paint_jit(px, py, z, colors, width, height):  # pragma: no cover
    img = np.full((height, width, 3), 255, np.uint8)
    best = np.full((height, width), -np.inf, np.float64)
    n = px.shape[0]
    for i in range(n):
        x, y = px[i], py[i]
        if x < 0 or x >= width or y < 0 or y >= height:
            continue
        if z[i] > best[y, x]:
            best[y, x] = z[i]
            img[y, x, 0] = colors[i, 0]
            img[y, x, 1] = colors[i, 1]
            img[y, x, 2] = colors[i, 2]
    return img


def bev_paint_numba(px, py, z, colors, width, height):
    return _bev_paint_jit(
        np.ascontiguousarray(px, np.int64),
        np.ascontiguousarray(py, np.int64),
        np.ascontiguousarray(z, np.float64),
        np.ascontiguousarray(colors, np.uint8),
        int(width), int(height),
    )


def bev_paint(px, py, z, colors, width, height):
    if NUMBA_ENABLED:
        return bev_paint_numba(px, py, z, colors, width, height)
    return bev_paint_numpy(px, py, z, colors, width, height)
