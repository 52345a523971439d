"""Deterministic raster drawing on uint8 RGB arrays.

Everything here is plain numpy so rendered output is byte-stable across
platforms and library versions; Pillow is used only as a PNG codec. Text
uses an embedded 5x7 bitmap font (rendering uppercases letters; glyphs
missing from the table fall back to a filled box).
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

RED = (220, 30, 30)
GREEN = (30, 200, 30)
WHITE = (255, 255, 255)
BLACK = (0, 0, 0)

# Distinct hues for anchor overlays, cycled by anchor order.
ANCHOR_PALETTE = (
    (230, 90, 30),
    (40, 120, 230),
    (30, 180, 90),
    (200, 40, 200),
    (230, 200, 30),
    (30, 200, 200),
)

_GLYPHS = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11100", "10010", "10001", "10001", "10001", "10010", "11100"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "10001", "11001", "10101", "10011", "10001", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "10001", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "10101", "01010"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "01010", "00100", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    " ": ("00000", "00000", "00000", "00000", "00000", "00000", "00000"),
    ":": ("00000", "01100", "01100", "00000", "01100", "01100", "00000"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
    ",": ("00000", "00000", "00000", "00000", "01100", "00100", "01000"),
    "-": ("00000", "00000", "00000", "11111", "00000", "00000", "00000"),
    "_": ("00000", "00000", "00000", "00000", "00000", "00000", "11111"),
    "(": ("00010", "00100", "01000", "01000", "01000", "00100", "00010"),
    ")": ("01000", "00100", "00010", "00010", "00010", "00100", "01000"),
    "[": ("01110", "01000", "01000", "01000", "01000", "01000", "01110"),
    "]": ("01110", "00010", "00010", "00010", "00010", "00010", "01110"),
    "<": ("00010", "00100", "01000", "10000", "01000", "00100", "00010"),
    ">": ("01000", "00100", "00010", "00001", "00010", "00100", "01000"),
    "/": ("00000", "00001", "00010", "00100", "01000", "10000", "00000"),
    "?": ("01110", "10001", "00001", "00010", "00100", "00000", "00100"),
    "!": ("00100", "00100", "00100", "00100", "00100", "00000", "00100"),
    "#": ("01010", "01010", "11111", "01010", "11111", "01010", "01010"),
    "+": ("00000", "00100", "00100", "11111", "00100", "00100", "00000"),
    "=": ("00000", "00000", "11111", "00000", "11111", "00000", "00000"),
    "'": ("00100", "00100", "01000", "00000", "00000", "00000", "00000"),
}
_FALLBACK = ("11111", "10001", "10001", "10001", "10001", "10001", "11111")

GLYPH_W = 5
GLYPH_H = 7


def _glyph_array(char: str) -> np.ndarray:
    rows = _GLYPHS.get(char.upper(), _FALLBACK)
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool)


def text_size(text: str, scale: int = 1) -> tuple[int, int]:
    """(width, height) in pixels of rendered text."""
    if not text:
        return 0, 0
    width = (len(text) * (GLYPH_W + 1) - 1) * scale
    return width, GLYPH_H * scale


def draw_text(img: np.ndarray, x: int, y: int, text: str, color, scale: int = 1) -> None:
    """Draw text with its top-left corner at (x, y), clipped to the image."""
    height, width = img.shape[:2]
    cursor = int(x)
    y = int(y)
    for char in text:
        glyph = _glyph_array(char)
        if scale > 1:
            glyph = np.kron(glyph, np.ones((scale, scale), dtype=bool))
        gh, gw = glyph.shape
        x0, y0 = max(0, cursor), max(0, y)
        x1, y1 = min(width, cursor + gw), min(height, y + gh)
        if x1 > x0 and y1 > y0:
            sub = glyph[y0 - y : y1 - y, x0 - cursor : x1 - cursor]
            region = img[y0:y1, x0:x1]
            region[sub] = color
        cursor += gw + scale


def draw_rect(img: np.ndarray, x0, y0, x1, y1, color, thickness: int = 1) -> None:
    """Draw a rectangle outline, clipped to the image."""
    height, width = img.shape[:2]
    x0, y0 = int(round(x0)), int(round(y0))
    x1, y1 = int(round(x1)), int(round(y1))
    for t in range(thickness):
        top, bottom = y0 + t, y1 - t
        left, right = x0 + t, x1 - t
        if top > bottom or left > right:
            break
        for yy in (top, bottom):
            if 0 <= yy < height:
                img[yy, max(0, left) : min(width, right + 1)] = color
        for xx in (left, right):
            if 0 <= xx < width:
                img[max(0, top) : min(height, bottom + 1), xx] = color


def draw_disk(img: np.ndarray, cx, cy, radius: int, color) -> None:
    """Draw a filled disk, clipped to the image."""
    height, width = img.shape[:2]
    cx, cy = int(round(cx)), int(round(cy))
    x0, x1 = max(0, cx - radius), min(width, cx + radius + 1)
    y0, y1 = max(0, cy - radius), min(height, cy + radius + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    region = img[y0:y1, x0:x1]
    region[inside] = color


def draw_line(img: np.ndarray, x0, y0, x1, y1, color, thickness: int = 1) -> None:
    """Draw a line segment by drawing a small disk at each Bresenham step."""
    x0, y0 = int(round(x0)), int(round(y0))
    x1, y1 = int(round(x1)), int(round(y1))
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    radius = max(0, thickness // 2)
    x, y = x0, y0
    while True:
        if radius == 0:
            height, width = img.shape[:2]
            if 0 <= x < width and 0 <= y < height:
                img[y, x] = color
        else:
            draw_disk(img, x, y, radius, color)
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def draw_arrow(img: np.ndarray, x, y, direction, length: float, color, thickness: int = 2) -> None:
    """Draw an arrow of the given pixel length from (x, y) along a 2D
    direction (pixel axes: +u right, +v down)."""
    d = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm < 1e-12:
        return
    d = d / norm
    tip = (x + d[0] * length, y + d[1] * length)
    draw_line(img, x, y, tip[0], tip[1], color, thickness)
    # two head strokes swept back 30 degrees either side
    head = 0.25 * length
    for sign in (1.0, -1.0):
        c, s = np.cos(np.pi * 5 / 6), np.sin(np.pi * 5 / 6) * sign
        hx = d[0] * c - d[1] * s
        hy = d[0] * s + d[1] * c
        draw_line(img, tip[0], tip[1], tip[0] + hx * head, tip[1] + hy * head, color, thickness)


def hstack_with_gutter(left: np.ndarray, right: np.ndarray, gutter: int = 4, fill=WHITE) -> np.ndarray:
    """Concatenate two RGB images side by side with a vertical gutter.

    Heights are equalized by letterboxing the shorter image, vertically
    centered (extra row goes below)."""
    height = max(left.shape[0], right.shape[0])

    def letterbox(img):
        if img.shape[0] == height:
            return img
        pad = height - img.shape[0]
        top = pad // 2
        out = np.full((height, img.shape[1], 3), fill, dtype=np.uint8)
        out[top : top + img.shape[0]] = img
        return out

    gutter_col = np.full((height, gutter, 3), fill, dtype=np.uint8)
    return np.concatenate([letterbox(left), gutter_col, letterbox(right)], axis=1)


# --- PNG codec ---------------------------------------------------------------

def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def save_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def load_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())
