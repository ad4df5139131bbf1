"""Scene description: materials, walls, furniture, transmitters, grid."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

H_MAX = 3.0
EMBED_EPS = 0.1
WALL_HEIGHT = 3.0
FURNITURE_HEIGHTS = (0.5, 1.0, 1.5, 2.0)
TX_HEIGHTS = tuple(round(0.2 * i, 1) for i in range(16))  # 0.0 .. 3.0


@dataclass(frozen=True)
class Material:
    name: str
    transmission_loss: float  # dB per crossing
    interaction_penalty_scale: float  # dB per radian of direction change

    def __post_init__(self):
        if self.transmission_loss < 0 or self.interaction_penalty_scale < 0:
            raise ValueError(f"material {self.name!r} has a negative loss")


BRICK = Material("brick", 10.0, 15.0)
FIR_WOOD = Material("fir_wood", 4.0, 8.0)
DEFAULT_MATERIALS = {m.name: m for m in (BRICK, FIR_WOOD)}


@dataclass(frozen=True)
class GridSpec:
    size: int = 256
    pixel_m: float = 0.08

    @property
    def extent_m(self) -> float:
        return self.size * self.pixel_m

    def cell_of(self, x: float, y: float) -> tuple:
        """(row, col) of the pixel containing (x, y); rows follow y."""
        r = min(max(int(np.floor(y / self.pixel_m)), 0), self.size - 1)
        c = min(max(int(np.floor(x / self.pixel_m)), 0), self.size - 1)
        return r, c

    def center_of(self, r: int, c: int) -> tuple:
        return (c + 0.5) * self.pixel_m, (r + 0.5) * self.pixel_m


@dataclass
class WallSegment:
    p0: tuple
    p1: tuple
    height: float = WALL_HEIGHT
    material: str = "brick"

    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))


@dataclass
class FurnitureItem:
    vertices: list
    height: float = 1.0
    material: str = "fir_wood"

    def centroid(self) -> tuple:
        v = np.asarray(self.vertices, dtype=float)
        return float(v[:, 0].mean()), float(v[:, 1].mean())


@dataclass
class Transmitter:
    x: float
    y: float
    height: float = 1.0


def _segments_cross(a, b, c, d) -> bool:
    """Proper intersection of segments ab and cd (shared endpoints excluded)."""
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    return o1 * o2 < 0 and o3 * o4 < 0


def is_simple_polygon(vertices) -> bool:
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    v = np.asarray(vertices, dtype=float)
    area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    return abs(area) > 0


@dataclass
class Environment:
    walls: list = field(default_factory=list)
    furniture: list = field(default_factory=list)
    transmitters: list = field(default_factory=list)
    grid: GridSpec = field(default_factory=GridSpec)
    materials: dict = field(default_factory=lambda: dict(DEFAULT_MATERIALS))
    synthetic: bool = True

    def material(self, name: str) -> Material:
        try:
            return self.materials[name]
        except KeyError:
            raise KeyError(f"unknown material {name!r}; known: {sorted(self.materials)}") from None

    def validate(self) -> None:
        """Raise ValueError naming the first violated scene invariant."""
        ext = self.grid.extent_m

        def inside(x, y):
            return 0.0 <= x <= ext and 0.0 <= y <= ext

        for i, w in enumerate(self.walls):
            if w.length() <= 0:
                raise ValueError(f"wall {i} has zero length")
            if not 0.0 < w.height <= H_MAX:
                raise ValueError(f"wall {i} height {w.height} outside (0, {H_MAX}]")
            if not (inside(*w.p0) and inside(*w.p1)):
                raise ValueError(f"wall {i} leaves the scene")
            self.material(w.material)
        for i, f in enumerate(self.furniture):
            if not any(np.isclose(f.height, h) for h in FURNITURE_HEIGHTS):
                raise ValueError(f"furniture {i} height {f.height} not in {FURNITURE_HEIGHTS}")
            if not is_simple_polygon(f.vertices):
                raise ValueError(f"furniture {i} is not a simple polygon")
            if not all(inside(*v) for v in f.vertices):
                raise ValueError(f"furniture {i} leaves the scene")
            self.material(f.material)
        for i, t in enumerate(self.transmitters):
            if not inside(t.x, t.y):
                raise ValueError(f"transmitter {i} outside the scene")
            if not 0.0 <= t.height <= H_MAX:
                raise ValueError(f"transmitter {i} height {t.height} outside [0, {H_MAX}]")

    # -- JSON
    def to_dict(self) -> dict:
        return {
            "grid": asdict(self.grid),
            "extent_m": self.grid.extent_m,
            "materials": {k: asdict(m) for k, m in sorted(self.materials.items())},
            "walls": [{"p0": list(w.p0), "p1": list(w.p1), "height": w.height, "material": w.material}
                      for w in self.walls],
            "furniture": [{"vertices": [list(v) for v in f.vertices], "height": f.height, "material": f.material}
                          for f in self.furniture],
            "transmitters": [asdict(t) for t in self.transmitters],
            "synthetic": self.synthetic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        return cls(
            walls=[WallSegment(tuple(w["p0"]), tuple(w["p1"]), w.get("height", WALL_HEIGHT),
                               w.get("material", "brick")) for w in d.get("walls", [])],
            furniture=[FurnitureItem([tuple(v) for v in f["vertices"]], f["height"], f.get("material", "fir_wood"))
                       for f in d.get("furniture", [])],
            transmitters=[Transmitter(**t) for t in d.get("transmitters", [])],
            grid=GridSpec(**d.get("grid", {})),
            materials={k: Material(**m) for k, m in d.get("materials", {}).items()} or dict(DEFAULT_MATERIALS),
            synthetic=d.get("synthetic", True),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_json(Path(path).read_text())


def embed_height(h, h_max: float = H_MAX, epsilon: float = EMBED_EPS):
    """Map an object height to a strictly positive pixel value, (h+eps)/(h_max+eps)."""
    h_arr = np.asarray(h, dtype=float)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if np.any(h_arr < 0) or np.any(h_arr > h_max):
        raise ValueError(f"height outside [0, {h_max}]: {h}")
    v = (h_arr + epsilon) / (h_max + epsilon)
    return float(v) if v.ndim == 0 else v


def unembed_height(v, h_max: float = H_MAX, epsilon: float = EMBED_EPS):
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr <= 0) or np.any(v_arr > 1 + 1e-12):
        raise ValueError(f"pixel value outside (0, 1]: {v}")
    h = v_arr * (h_max + epsilon) - epsilon
    return float(h) if h.ndim == 0 else h
