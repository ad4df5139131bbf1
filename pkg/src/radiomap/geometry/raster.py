"""Scene -> pixel grids.

Pixel (r, c) covers x in [c, c+1)*px and y in [r, r+1)*px. A wall marks every
pixel whose square footprint touches the segment (L-inf distance from the
pixel centre at most half a pixel), which yields a 4-connected line that an
8-neighbour walk cannot slip through diagonally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import EMBED_EPS, H_MAX, Environment, GridSpec, embed_height

_TOUCH_EPS = 1e-9


def wall_mask(p0, p1, grid: GridSpec) -> np.ndarray:
    """Boolean grid of pixels whose closed square intersects segment p0-p1."""
    px, n = grid.pixel_m, grid.size
    (x0, y0), (x1, y1) = p0, p1
    lo_c = max(int(np.floor(min(x0, x1) / px)) - 1, 0)
    hi_c = min(int(np.floor(max(x0, x1) / px)) + 1, n - 1)
    lo_r = max(int(np.floor(min(y0, y1) / px)) - 1, 0)
    hi_r = min(int(np.floor(max(y0, y1) / px)) + 1, n - 1)
    mask = np.zeros((n, n), dtype=bool)
    if lo_c > hi_c or lo_r > hi_r:
        return mask
    rr, cc = np.mgrid[lo_r:hi_r + 1, lo_c:hi_c + 1]
    half = 0.5 * px + _TOUCH_EPS
    xmin, xmax = (cc + 0.5) * px - half, (cc + 0.5) * px + half
    ymin, ymax = (rr + 0.5) * px - half, (rr + 0.5) * px + half
    # Liang-Barsky clip of the parametric segment against every box at once
    dx, dy = x1 - x0, y1 - y0
    t0 = np.zeros(rr.shape)
    t1 = np.ones(rr.shape)
    ok = np.ones(rr.shape, dtype=bool)
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0:
            ok &= q >= 0
            continue
        r = q / p
        if p < 0:
            t0 = np.maximum(t0, r)
        else:
            t1 = np.minimum(t1, r)
    ok &= t0 <= t1
    mask[lo_r:hi_r + 1, lo_c:hi_c + 1] = ok
    return mask


def polygon_mask(vertices, grid: GridSpec) -> np.ndarray:
    """Pixels whose centre is inside the polygon (even-odd rule); falls back
    to the pixel holding the vertex mean when the polygon is thinner than a pixel."""
    n, px = grid.size, grid.pixel_m
    v = np.asarray(vertices, dtype=float)
    lo_c = max(int(np.floor(v[:, 0].min() / px)), 0)
    hi_c = min(int(np.floor(v[:, 0].max() / px)), n - 1)
    lo_r = max(int(np.floor(v[:, 1].min() / px)), 0)
    hi_r = min(int(np.floor(v[:, 1].max() / px)), n - 1)
    mask = np.zeros((n, n), dtype=bool)
    if lo_c <= hi_c and lo_r <= hi_r:
        rr, cc = np.mgrid[lo_r:hi_r + 1, lo_c:hi_c + 1]
        xs, ys = (cc + 0.5) * px, (rr + 0.5) * px
        inside = np.zeros(rr.shape, dtype=bool)
        xj, yj = v[-1]
        for xi, yi in v:
            if yi != yj:
                crosses = ((yi > ys) != (yj > ys)) & (xs < (xj - xi) * (ys - yi) / (yj - yi) + xi)
                inside ^= crosses
            xj, yj = xi, yi
        mask[lo_r:hi_r + 1, lo_c:hi_c + 1] = inside
    if not mask.any():
        mask[grid.cell_of(float(v[:, 0].mean()), float(v[:, 1].mean()))] = True
    return mask


def rasterize(env: Environment, tx_index: int | None = 0, h_max: float = H_MAX,
              epsilon: float = EMBED_EPS) -> np.ndarray:
    """3 x N x N float32 stack: walls, furniture, transmitter (embedded heights, 0 = empty)."""
    n = env.grid.size
    stack = np.zeros((3, n, n), dtype=np.float32)
    for w in env.walls:
        val = np.float32(embed_height(w.height, h_max, epsilon))
        m = wall_mask(w.p0, w.p1, env.grid)
        stack[0][m] = np.maximum(stack[0][m], val)
    for f in env.furniture:
        val = np.float32(embed_height(f.height, h_max, epsilon))
        m = polygon_mask(f.vertices, env.grid)
        stack[1][m] = np.maximum(stack[1][m], val)
    if tx_index is not None and env.transmitters:
        t = env.transmitters[tx_index]
        stack[2][env.grid.cell_of(t.x, t.y)] = np.float32(embed_height(t.height, h_max, epsilon))
    return stack


@dataclass
class SceneGrid:
    """Per-pixel physical attributes used by the propagation search.

    The tallest object wins where objects overlap; ``obj_id`` is -1 on empty
    pixels, wall indices first, then furniture indices offset by the wall count.
    """
    height: np.ndarray
    loss_db: np.ndarray
    turn_scale: np.ndarray
    obj_id: np.ndarray
    grid: GridSpec

    def mirrored(self, axis: int) -> "SceneGrid":
        f = lambda a: np.ascontiguousarray(np.flip(a, axis=axis))
        return SceneGrid(f(self.height), f(self.loss_db), f(self.turn_scale), f(self.obj_id), self.grid)


def scene_grid(env: Environment) -> SceneGrid:
    n = env.grid.size
    height = np.zeros((n, n))
    loss = np.zeros((n, n))
    turn = np.zeros((n, n))
    obj = np.full((n, n), -1, dtype=np.int32)
    objects = [(w.height, env.material(w.material), wall_mask(w.p0, w.p1, env.grid)) for w in env.walls]
    objects += [(f.height, env.material(f.material), polygon_mask(f.vertices, env.grid)) for f in env.furniture]
    for oid, (h, mat, m) in enumerate(objects):
        take = m & (h > height)
        height[take] = h
        loss[take] = mat.transmission_loss
        turn[take] = mat.interaction_penalty_scale
        obj[take] = oid
    return SceneGrid(height, loss, turn, obj, env.grid)


def transmitter_cells_clear(env: Environment) -> bool:
    """True when no transmitter sits on a wall pixel."""
    walls = np.zeros((env.grid.size, env.grid.size), dtype=bool)
    for w in env.walls:
        walls |= wall_mask(w.p0, w.p1, env.grid)
    return all(not walls[env.grid.cell_of(t.x, t.y)] for t in env.transmitters)
