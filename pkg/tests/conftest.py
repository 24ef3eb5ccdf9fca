"""Shared test helpers: independent oracles and fixture builders."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from scopeline.geometry import BoundingBox
from scopeline.media import Frame


def pixel_grid_iou(a: BoundingBox, b: BoundingBox) -> Fraction:
    """Brute-force IoU oracle: rasterize both boxes over their bounding region
    and count pixels. Independent of the arithmetic intersection formula."""
    x0 = min(a.x, b.x)
    y0 = min(a.y, b.y)
    x1 = max(a.right, b.right)
    y1 = max(a.bottom, b.bottom)
    grid_a = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    grid_b = np.zeros_like(grid_a)
    grid_a[a.y - y0 : a.bottom - y0, a.x - x0 : a.right - x0] = True
    grid_b[b.y - y0 : b.bottom - y0, b.x - x0 : b.right - x0] = True
    inter = int(np.count_nonzero(grid_a & grid_b))
    union = int(np.count_nonzero(grid_a | grid_b))
    return Fraction(inter, union)


def union_find_components(width: int, height: int, bits: bytes, connectivity: int) -> list[dict]:
    """Flood-fill oracle via union-find; returns per-component pixel stats
    keyed in scan order of each component's first pixel."""
    parent = list(range(width * height))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    if connectivity == 4:
        offsets = ((1, 0), (0, 1))
    else:
        offsets = ((1, 0), (0, 1), (1, 1), (-1, 1))
    for y in range(height):
        for x in range(width):
            if not bits[y * width + x]:
                continue
            for dx, dy in offsets:
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and 0 <= ny < height and bits[ny * width + nx]:
                    union(y * width + x, ny * width + nx)

    components: dict[int, dict] = {}
    for y in range(height):
        for x in range(width):
            idx = y * width + x
            if not bits[idx]:
                continue
            root = find(idx)
            comp = components.setdefault(
                root, {"count": 0, "min_x": x, "max_x": x, "min_y": y, "max_y": y, "first": idx}
            )
            comp["count"] += 1
            comp["min_x"] = min(comp["min_x"], x)
            comp["max_x"] = max(comp["max_x"], x)
            comp["min_y"] = min(comp["min_y"], y)
            comp["max_y"] = max(comp["max_y"], y)
    return sorted(components.values(), key=lambda c: c["first"])


def solid_frame(rgb: tuple[int, int, int], width: int = 8, height: int = 8, index: int = 0) -> Frame:
    return Frame(index, 0.0, width, height, bytes(rgb) * (width * height))


def checkerboard_frame(width: int = 8, height: int = 8, index: int = 0, tile: int = 1) -> Frame:
    pixels = bytearray()
    for y in range(height):
        for x in range(width):
            v = 255 if (x // tile + y // tile) % 2 else 0
            pixels += bytes((v, v, v))
    return Frame(index, 0.0, width, height, bytes(pixels))
