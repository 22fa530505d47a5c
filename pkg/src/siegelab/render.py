"""Deterministic escape-time pictures with curve overlays from scene JSON."""

from __future__ import annotations

import json
import math

import numpy as np
from PIL import Image, ImageDraw

from .rays_potentials import basin_grid

BASIN_DARK = np.array([12, 18, 48])
BASIN_LIGHT = np.array([150, 190, 235])
DISK_COLOR = np.array([235, 190, 70])
BUBBLE_COLORS = (np.array([200, 120, 40]), np.array([225, 150, 60]))
UNRESOLVED = np.array([0, 0, 0])

OVERLAY_COLORS = {"rays": (220, 40, 40), "equipotentials": (40, 210, 210), "regions": (40, 200, 60),
                  "bubbles": (200, 60, 200), "circle": (255, 255, 255)}


def pixel_grid(center: complex, half_width: float, size: int) -> np.ndarray:
    t = (np.arange(size) + 0.5) / size * 2 - 1
    return center + half_width * (t[None, :] - 1j * t[:, None])


def colorize(F, Z: np.ndarray, iterations: int = 200) -> np.ndarray:
    """RGB array: potential bands in the basin of infinity, gold for the disk and its preimages."""
    grid = basin_grid(F, Z, iterations)
    img = np.empty(Z.shape + (3,), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        band = np.log2(np.where(grid.escaped, grid.potential, 1.0)) % 1.0
    t = band[..., None]
    img[:] = BASIN_DARK * (1 - t) + BASIN_LIGHT * t
    img[~grid.escaped & (grid.kind == 0)] = UNRESOLVED
    preimage = grid.kind == 1
    img[preimage & (grid.entry_step % 2 == 1)] = BUBBLE_COLORS[0]
    img[preimage & (grid.entry_step % 2 == 0)] = BUBBLE_COLORS[1]
    img[np.abs(Z) <= 1] = DISK_COLOR
    return img.round().astype(np.uint8)


def _to_pixels(points, center, half_width, size):
    p = np.asarray([complex(*q) if not isinstance(q, complex) else q for q in points])
    x = ((p.real - center.real) / half_width + 1) / 2 * size
    y = ((center.imag - p.imag) / half_width + 1) / 2 * size
    return list(zip(x.tolist(), y.tolist()))


def _curves(scene: dict):
    for r in scene.get("rays", []):
        yield "rays", r["points"]
    for e in scene.get("equipotentials", []):
        pts = e["points"]
        yield "equipotentials", pts + pts[:1]
    for reg in scene.get("regions", []):
        pts = reg["boundary"] if isinstance(reg, dict) else reg
        yield "regions", pts + pts[:1]
    for pts in scene.get("curves", {}).values():
        yield "regions", pts
    for b in scene.get("bubbles", []):
        pts = b["boundary"]
        yield "bubbles", pts + pts[:1]


def render(F, center: complex = 0j, half_width: float = 3.0, size: int = 512, scene: dict | None = None,
           iterations: int = 200, circle: bool = True) -> Image.Image:
    if not (half_width > 0 and math.isfinite(half_width)) or size < 2:
        raise ValueError(f"degenerate window: half width {half_width}, size {size}")
    img = Image.fromarray(colorize(F, pixel_grid(center, half_width, size), iterations), "RGB")
    draw = ImageDraw.Draw(img)
    if circle:
        ring = np.exp(2j * math.pi * np.arange(721) / 720)
        draw.line(_to_pixels(ring, center, half_width, size), fill=OVERLAY_COLORS["circle"], width=1)
    for kind, pts in _curves(scene or {}):
        if len(pts) > 1:
            draw.line(_to_pixels(pts, center, half_width, size), fill=OVERLAY_COLORS[kind], width=1)
    return img


def load_scene(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_png(img: Image.Image, path) -> None:
    # fixed encoder settings and no metadata so reruns are byte-identical
    img.save(path, format="PNG", optimize=False, compress_level=6)
