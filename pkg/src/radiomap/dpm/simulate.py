"""Per-height radio maps and single-receiver dominant paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.raster import SceneGrid, scene_grid
from ..geometry.scene import Environment
from .model import DominantPath, SimConfig, normalize_pathloss
from .search import DC, DR, QUARTER_PI, SearchResult, effective_turn_scale, min_loss_search


def obstruction_mask(grid: SceneGrid, tx_height: float, rx_height: float) -> np.ndarray:
    """Objects at least as tall as the midpoint of the tx-rx heights obstruct.

    This is the straight tx-rx ray height halfway along the link; using one
    height per (tx, rx) pair keeps the per-step costs independent of the rest
    of the path.
    """
    return (grid.height > 0) & (grid.height >= 0.5 * (tx_height + rx_height))


def _search(grid: SceneGrid, blocking, tx_cell, cfg: SimConfig) -> SearchResult:
    return min_loss_search(blocking, grid.loss_db, grid.turn_scale, grid.obj_id, tx_cell, grid.grid.pixel_m,
                           cfg.fspl_1m_db, cfg.pathloss_exponent, cfg.turn_cap_db, cfg.waveguiding_db)


def simulate_pathloss_3d(env: Environment, cfg: SimConfig, tx_index: int = 0,
                         grid: SceneGrid | None = None) -> np.ndarray:
    """H_r x N x N path loss PL in dB (positive = attenuation)."""
    grid = scene_grid(env) if grid is None else grid
    tx = env.transmitters[tx_index]
    tx_cell = env.grid.cell_of(tx.x, tx.y)
    planes = np.empty((len(cfg.rx_heights), env.grid.size, env.grid.size))
    cache: dict = {}
    for k, h in enumerate(cfg.rx_heights):
        blocking = obstruction_mask(grid, tx.height, h)
        key = blocking.tobytes()
        if key not in cache:
            cache[key] = _search(grid, blocking, tx_cell, cfg).loss_db
        planes[k] = cache[key]
    return planes


@dataclass
class RadioMap3D:
    values: np.ndarray  # H_r x N x N normalized, in [0, 1]
    heights: tuple
    L_db: np.ndarray  # H_r x N x N, L = -PL


def simulate_radio_map_3d(env: Environment, cfg: SimConfig, tx_index: int = 0,
                          m1_db: float | None = None) -> RadioMap3D:
    """Normalized map. Without a dataset M1 the map's own maximum of L is used."""
    L = -simulate_pathloss_3d(env, cfg, tx_index)
    m1 = m1_db if m1_db is not None else (cfg.m1_db if cfg.m1_db is not None else float(L.max()))
    values = normalize_pathloss(L, cfg, m1)
    return RadioMap3D(np.minimum(values, 1.0), tuple(cfg.rx_heights), L)


def dominant_path(env: Environment, tx_index: int, rx_cell: tuple, rx_height: float, cfg: SimConfig,
                  grid: SceneGrid | None = None) -> DominantPath:
    grid = scene_grid(env) if grid is None else grid
    tx = env.transmitters[tx_index]
    tx_cell = env.grid.cell_of(tx.x, tx.y)
    r, c = rx_cell
    if not (0 <= r < env.grid.size and 0 <= c < env.grid.size):
        raise ValueError(f"receiver cell {rx_cell} outside the grid")
    blocking = obstruction_mask(grid, tx.height, rx_height)
    res = _search(grid, blocking, tx_cell, cfg)
    cells, n_o, n_d = res.path_to(r, c)
    return describe_path(env, grid, blocking, cells, n_o, n_d)


def _object_material(env: Environment, oid: int) -> str:
    nw = len(env.walls)
    return env.walls[oid].material if oid < nw else env.furniture[oid - nw].material


def describe_path(env: Environment, grid: SceneGrid, blocking, cells, n_o: int, n_d: int) -> DominantPath:
    """Interactions and crossings along a cell sequence, by the same rules as the search."""
    px = env.grid.pixel_m
    scale = effective_turn_scale(blocking, grid.turn_scale)
    eff_id = np.where(blocking, grid.obj_id, -1)
    dirs = []
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        dirs.append(next(k for k in range(8) if DR[k] == r1 - r0 and DC[k] == c1 - c0))
    interactions = []
    for i in range(1, len(cells) - 1):
        k = abs(dirs[i] - dirs[i - 1])
        k = min(k, 8 - k)
        r, c = cells[i]
        if k and scale[r, c] > 0:
            interactions.append((k * QUARTER_PI, float(scale[r, c]), _surface_material(env, grid, blocking, r, c)))
    walls = []
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        if blocking[r1, c1] and eff_id[r1, c1] != eff_id[r0, c0]:
            walls.append((_object_material(env, int(grid.obj_id[r1, c1])), float(grid.loss_db[r1, c1])))
    length = max(n_o + np.sqrt(2.0) * n_d, 1.0) * px
    return DominantPath(list(cells), float(length), interactions, walls, n_o, n_d)


def _surface_material(env, grid, blocking, r, c):
    """Material whose rate applies at (r, c): its own, or the highest-rate obstructing neighbour."""
    n = grid.height.shape[0]
    if blocking[r, c]:
        return _object_material(env, int(grid.obj_id[r, c]))
    best, name = -1.0, None
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            rr, cc = r + dr, c + dc
            if (dr or dc) and 0 <= rr < n and 0 <= cc < n and blocking[rr, cc]:
                if grid.turn_scale[rr, cc] > best:
                    best, name = grid.turn_scale[rr, cc], _object_material(env, int(grid.obj_id[rr, cc]))
    return name
