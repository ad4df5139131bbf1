"""Indoor scenes, random floorplans, rasterization and height embedding."""
from .generate import GenConfig, generate_random_environment
from .image import read_pgm, to_gray8, write_pgm
from .raster import SceneGrid, polygon_mask, rasterize, scene_grid, transmitter_cells_clear, wall_mask
from .scene import (BRICK, DEFAULT_MATERIALS, EMBED_EPS, FIR_WOOD, FURNITURE_HEIGHTS, H_MAX, TX_HEIGHTS,
                    WALL_HEIGHT, Environment, FurnitureItem, GridSpec, Material, Transmitter, WallSegment,
                    embed_height, is_simple_polygon, unembed_height)

__all__ = [
    "GenConfig", "generate_random_environment", "read_pgm", "to_gray8", "write_pgm", "SceneGrid", "polygon_mask",
    "rasterize", "scene_grid", "transmitter_cells_clear", "wall_mask", "BRICK", "DEFAULT_MATERIALS", "EMBED_EPS",
    "FIR_WOOD", "FURNITURE_HEIGHTS", "H_MAX", "TX_HEIGHTS", "WALL_HEIGHT", "Environment", "FurnitureItem",
    "GridSpec", "Material", "Transmitter", "WallSegment", "embed_height", "is_simple_polygon", "unembed_height",
]
