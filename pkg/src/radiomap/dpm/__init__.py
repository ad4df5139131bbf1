"""Dominant-path propagation model and radio-map normalization."""
from .model import (DEFAULT_RX_HEIGHTS, SPEED_OF_LIGHT, DominantPath, SimConfig, compute_noise_floor,
                    compute_thresholds, denormalize, distance_loss_db, normalize_pathloss, pathloss_along_path)
from .search import SearchResult, effective_turn_scale, min_loss_search
from .simulate import (RadioMap3D, describe_path, dominant_path, obstruction_mask, simulate_pathloss_3d,
                       simulate_radio_map_3d)

__all__ = [
    "DEFAULT_RX_HEIGHTS", "SPEED_OF_LIGHT", "DominantPath", "SimConfig", "compute_noise_floor", "compute_thresholds",
    "denormalize", "distance_loss_db", "normalize_pathloss", "pathloss_along_path", "SearchResult",
    "effective_turn_scale", "min_loss_search", "RadioMap3D", "describe_path", "dominant_path", "obstruction_mask",
    "simulate_pathloss_3d", "simulate_radio_map_3d",
]
