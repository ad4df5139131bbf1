"""Random floorplans: a rectangular building, recursive room partitions with
door gaps, rectangular furniture and transmitters in free cells."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensor.random import RandomStream
from .raster import polygon_mask, wall_mask
from .scene import (FURNITURE_HEIGHTS, TX_HEIGHTS, Environment, FurnitureItem, GridSpec, Transmitter,
                    WallSegment)


@dataclass
class GenConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    margin_m: tuple = (0.4, 2.0)  # building inset from the scene border
    min_room_m: float = 3.0
    max_depth: int = 3
    door_m: float = 0.9
    n_furniture: tuple = (5, 20)
    furniture_side_m: tuple = (0.4, 2.0)
    n_transmitters: int = 1
    max_tries: int = 200

    def __post_init__(self):
        lo, hi = self.n_furniture
        if not 0 <= lo <= hi:
            raise ValueError(f"bad furniture count range {self.n_furniture}")
        if self.margin_m[0] < 0 or self.margin_m[0] > self.margin_m[1]:
            raise ValueError(f"bad margin range {self.margin_m}")
        if self.grid.extent_m - 2 * self.margin_m[1] < 2 * self.door_m:
            raise ValueError("scene too small for the configured margins")


def _snap(v: float, px: float) -> float:
    """Nearest pixel-centre coordinate, so axis-aligned walls are one pixel thick."""
    return (np.floor(v / px) + 0.5) * px


def _partition(rng: RandomStream, box, depth, cfg: GenConfig, walls: list) -> None:
    x0, y0, x1, y1 = box
    px = cfg.grid.pixel_m
    w, h = x1 - x0, y1 - y0
    if depth >= cfg.max_depth or max(w, h) < 2 * cfg.min_room_m:
        return
    vertical = w >= h  # split the longer side
    span_lo, span_hi = (x0, x1) if vertical else (y0, y1)
    cut = _snap(float(rng.uniform(span_lo + cfg.min_room_m, span_hi - cfg.min_room_m)), px)
    other_lo, other_hi = (y0, y1) if vertical else (x0, x1)
    door_at = float(rng.uniform(other_lo + 0.2, other_hi - 0.2 - cfg.door_m))
    pieces = [(other_lo, door_at), (door_at + cfg.door_m, other_hi)]
    for a, b in pieces:
        if b - a < px:
            continue
        if vertical:
            walls.append(WallSegment((cut, a), (cut, b)))
        else:
            walls.append(WallSegment((a, cut), (b, cut)))
    if vertical:
        _partition(rng, (x0, y0, cut, y1), depth + 1, cfg, walls)
        _partition(rng, (cut, y0, x1, y1), depth + 1, cfg, walls)
    else:
        _partition(rng, (x0, y0, x1, cut), depth + 1, cfg, walls)
        _partition(rng, (x0, cut, x1, y1), depth + 1, cfg, walls)


def generate_random_environment(rng: RandomStream, cfg: GenConfig | None = None) -> Environment:
    cfg = GenConfig() if cfg is None else cfg
    grid = cfg.grid
    ext, px = grid.extent_m, grid.pixel_m
    m = [float(rng.uniform(*cfg.margin_m)) for _ in range(4)]
    bx0, by0 = _snap(m[0], px), _snap(m[1], px)
    bx1, by1 = _snap(ext - m[2], px), _snap(ext - m[3], px)
    walls = [
        WallSegment((bx0, by0), (bx1, by0)), WallSegment((bx1, by0), (bx1, by1)),
        WallSegment((bx1, by1), (bx0, by1)), WallSegment((bx0, by1), (bx0, by0)),
    ]
    _partition(rng, (bx0, by0, bx1, by1), 0, cfg, walls)

    n = grid.size
    blocked = np.zeros((n, n), dtype=bool)
    for w in walls:
        blocked |= wall_mask(w.p0, w.p1, grid)

    furniture = []
    target = int(rng.integers(cfg.n_furniture[0], cfg.n_furniture[1] + 1))
    tries = 0
    while len(furniture) < target and tries < cfg.max_tries:
        tries += 1
        sw, sh = (float(v) for v in rng.uniform(*cfg.furniture_side_m, shape=2))
        fx = float(rng.uniform(bx0 + px, bx1 - px - sw))
        fy = float(rng.uniform(by0 + px, by1 - px - sh))
        verts = [(fx, fy), (fx + sw, fy), (fx + sw, fy + sh), (fx, fy + sh)]
        mask = polygon_mask(verts, grid)
        if (mask & blocked).any():
            continue
        height = float(rng.choice(FURNITURE_HEIGHTS))
        furniture.append(FurnitureItem(verts, height))
        blocked |= mask

    inner = np.zeros((n, n), dtype=bool)
    r0, c0 = grid.cell_of(bx0, by0)
    r1, c1 = grid.cell_of(bx1, by1)
    inner[r0 + 1:r1, c0 + 1:c1] = True
    free = np.flatnonzero(inner & ~blocked)
    if free.size == 0:
        raise RuntimeError("generated building has no free cell for a transmitter")
    transmitters = []
    for _ in range(cfg.n_transmitters):
        r, c = divmod(int(free[int(rng.integers(0, free.size))]), n)
        x, y = grid.center_of(r, c)
        transmitters.append(Transmitter(x, y, float(rng.choice(TX_HEIGHTS))))

    env = Environment(walls=walls, furniture=furniture, transmitters=transmitters, grid=grid, synthetic=True)
    env.validate()
    return env
