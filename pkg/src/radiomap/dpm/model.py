"""Link budget pieces: configuration, the dominant-path loss formula, the
noise-derived thresholds and the dB <-> [0, 1] normalization."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_RX_HEIGHTS = tuple(round(0.5 + 0.1 * i, 1) for i in range(16))


@dataclass
class SimConfig:
    frequency_hz: float = 5.9e9
    pathloss_exponent: float = 2.0
    tx_power_dbm: float = 23.0
    bandwidth_hz: float = 1e7
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 0.0
    waveguiding_db: float = 0.0
    turn_cap_db: float = 35.0
    m1_db: float | None = None  # dataset maximum of L = -PL; set after simulation
    rx_heights: tuple = field(default_factory=lambda: DEFAULT_RX_HEIGHTS)

    def __post_init__(self):
        if self.frequency_hz <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("frequency and bandwidth must be positive")
        if self.pathloss_exponent < 1:
            raise ValueError("pathloss exponent must be at least 1")
        if self.turn_cap_db < 0:
            raise ValueError("turn cap must be non-negative")
        self.rx_heights = tuple(float(h) for h in self.rx_heights)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def fspl_1m_db(self) -> float:
        return 20.0 * math.log10(4.0 * math.pi / self.wavelength_m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rx_heights"] = list(self.rx_heights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(**d)


@dataclass
class DominantPath:
    cells: list  # (row, col) from transmitter to receiver
    length_m: float
    interactions: list  # (angle_rad, dB-per-rad scale, material name or None)
    walls: list  # (material name, dB) per crossing
    n_orth: int = 0
    n_diag: int = 0


def distance_loss_db(length_m, cfg: SimConfig):
    return cfg.fspl_1m_db + 10.0 * cfg.pathloss_exponent * np.log10(length_m)


def pathloss_along_path(path: DominantPath, cfg: SimConfig) -> float:
    """Distance term + capped interaction term + transmission term - waveguiding, in dB."""
    if path.length_m <= 0:
        raise ValueError("path length must be positive")
    turn = 0.0
    for angle, scale, _ in path.interactions:
        turn = min(turn + scale * abs(angle), cfg.turn_cap_db)
    wall = 0.0
    for _, t in path.walls:
        wall += t
    return float(distance_loss_db(path.length_m, cfg) + turn + wall - cfg.waveguiding_db)


def compute_noise_floor(cfg: SimConfig) -> float:
    return cfg.noise_density_dbm_hz + 10.0 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db


def compute_thresholds(cfg: SimConfig, m1_db: float | None = None) -> tuple:
    """(L_thr, L_trnc) in dB; L_trnc needs the dataset maximum M1."""
    l_thr = compute_noise_floor(cfg) - cfg.tx_power_dbm
    m1 = cfg.m1_db if m1_db is None else m1_db
    if m1 is None:
        raise ValueError("the dataset maximum M1 is not set")
    return l_thr, (5.0 * l_thr - m1) / 4.0


def normalize_pathloss(L_db, cfg: SimConfig, m1_db: float | None = None):
    """v = max((L - L_trnc) / (M1 - L_trnc), 0) with L = -PL in dB."""
    _, l_trnc = compute_thresholds(cfg, m1_db)
    m1 = cfg.m1_db if m1_db is None else m1_db
    if not m1 > l_trnc:
        raise ValueError(f"M1 ({m1}) must exceed the truncation level ({l_trnc})")
    v = np.maximum((np.asarray(L_db, dtype=np.float64) - l_trnc) / (m1 - l_trnc), 0.0)
    return float(v) if v.ndim == 0 else v


def denormalize(v, cfg: SimConfig, m1_db: float | None = None):
    _, l_trnc = compute_thresholds(cfg, m1_db)
    m1 = cfg.m1_db if m1_db is None else m1_db
    out = l_trnc + np.asarray(v, dtype=np.float64) * (m1 - l_trnc)
    return float(out) if out.ndim == 0 else out
