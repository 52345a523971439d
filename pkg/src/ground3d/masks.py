"""Run-length wire codec for binary masks.

A mask travels as ``{"size": [H, W], "counts": [...]}`` where counts are
row-major run lengths alternating false/true runs and always starting
with the false run (which may be 0).
"""

from __future__ import annotations

import numpy as np


def encode_rle(mask: np.ndarray) -> dict:
    """Encode a 2D boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2D")
    flat = mask.reshape(-1)
    if flat.size == 0:
        return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": []}
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    """Decode back to a 2D boolean mask."""
    height, width = (int(x) for x in rle["size"])
    counts = [int(c) for c in rle["counts"]]
    total = sum(counts)
    if total != height * width:
        raise ValueError(f"RLE covers {total} pixels, mask has {height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape(height, width)
