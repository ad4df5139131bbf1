"""Synthetic dataset generation and loading.

Layout under the dataset root::

    envs/NNN.json         scene description
    images/NNN.rmt        (2 + T) x N x N: walls, furniture, one channel per transmitter
    maps/NNN_TT.rmt       H x N x N normalized maps for transmitter TT
    maps/NNN_TT.raw.rmt   H x N x N raw L = -PL in dB (float32)
    manifest.json

The sample for (env NNN, transmitter TT) uses image channels [0, 1, 2 + TT].
M1 is the maximum of L over every raw map of the dataset, so normalization
runs as a second pass after all simulations.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dpm import SimConfig, compute_noise_floor, compute_thresholds, normalize_pathloss, simulate_pathloss_3d
from .geometry import Environment, GenConfig, GridSpec, generate_random_environment, rasterize, scene_grid
from .tensor import RandomStream, load_tensor, save_tensor

MANIFEST_FORMAT = "radiomap-dataset"
MANIFEST_VERSION = 1
SCENE_EXTENT_M = 20.48
SPLIT_TAG = 1_000_003


def worker_count() -> int:
    """Parallel workers for simulation, bounded by RMAP_THREADS (default 1)."""
    raw = os.environ.get("RMAP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"RMAP_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"RMAP_THREADS must be a positive integer, got {raw!r}")
    return n


def split_counts(n: int, ratios) -> tuple:
    total = float(sum(ratios))
    if len(ratios) != 3 or min(ratios) < 0 or total <= 0:
        raise ValueError(f"need three non-negative split ratios, got {ratios}")
    counts = [int(round(n * r / total)) for r in ratios]
    # small datasets: every split with a nonzero ratio keeps at least one environment
    for k in (1, 2):
        if ratios[k] > 0 and counts[k] == 0 and n >= sum(r > 0 for r in ratios):
            counts[k] = 1
    counts[0] = n - counts[1] - counts[2]
    if counts[0] < 0:
        raise ValueError(f"cannot split {n} environments with ratios {ratios}")
    return tuple(counts)


def split_dataset(env_ids, ratios=(8, 1, 1), rng: RandomStream | None = None) -> dict:
    """Environment-level split: every transmitter of a building lands in one split."""
    env_ids = list(env_ids)
    if len(set(env_ids)) != len(env_ids):
        raise ValueError("duplicate environment ids")
    rng = RandomStream(0) if rng is None else rng
    order = [env_ids[i] for i in rng.permutation(len(env_ids))]
    n_train, n_val, _ = split_counts(len(env_ids), ratios)
    return {"train": sorted(order[:n_train]), "val": sorted(order[n_train:n_train + n_val]),
            "test": sorted(order[n_train + n_val:])}


def _env_name(i: int) -> str:
    return f"{i:03d}"


def generate_dataset(root, n_envs: int, tx_per_env: int = 16, seed: int = 0, resolution: int = 256,
                     sim: SimConfig | None = None, ratios=(8, 1, 1), progress=None) -> dict:
    """Generate, rasterize and simulate ``n_envs`` scenes; returns the manifest."""
    if n_envs < 1 or tx_per_env < 1:
        raise ValueError("need at least one environment and one transmitter")
    sim = SimConfig() if sim is None else sim
    root = Path(root)
    for sub in ("envs", "images", "maps"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    grid = GridSpec(resolution, SCENE_EXTENT_M / resolution)
    gen = GenConfig(grid=grid, n_transmitters=tx_per_env)
    base = RandomStream(seed)
    samples = []
    workers = worker_count()
    for i in range(n_envs):
        stream = base.spawn(i)
        env_seed = stream.seed
        env = generate_random_environment(stream, gen)
        name = _env_name(i)
        env.save(root / "envs" / f"{name}.json")
        static = rasterize(env, tx_index=None)
        tx_planes = [rasterize(env, tx_index=t)[2] for t in range(tx_per_env)]
        save_tensor(root / "images" / f"{name}.rmt", np.concatenate([static[:2], np.stack(tx_planes)]))
        sg = scene_grid(env)

        def run(t, env=env, sg=sg):
            return -simulate_pathloss_3d(env, sim, tx_index=t, grid=sg)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                raws = list(pool.map(run, range(tx_per_env)))
        else:
            raws = [run(t) for t in range(tx_per_env)]
        for t, raw in enumerate(raws):
            save_tensor(root / "maps" / f"{name}_{t:02d}.raw.rmt", raw)
            samples.append({"env_id": i, "tx": t, "env": f"envs/{name}.json", "image": f"images/{name}.rmt",
                            "map": f"maps/{name}_{t:02d}.rmt", "raw": f"maps/{name}_{t:02d}.raw.rmt",
                            "env_seed": env_seed})
        if progress:
            progress(i + 1, n_envs)

    # second pass: dataset-wide M1 from the stored (float32) raw maps
    m1 = max(float(load_tensor(root / s["raw"]).max()) for s in samples)
    for s in samples:
        v = normalize_pathloss(load_tensor(root / s["raw"]).astype(np.float64), sim, m1)
        save_tensor(root / s["map"], v)
    l_thr, l_trnc = compute_thresholds(sim, m1)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "synthetic": True,
        "seed": seed,
        "n_envs": n_envs,
        "tx_per_env": tx_per_env,
        "grid": {"size": grid.size, "pixel_m": grid.pixel_m},
        "extent_m": grid.extent_m,
        "sim": {**sim.to_dict(), "m1_db": m1},
        "m1_db": m1,
        "thresholds": {"noise_floor_dbm": compute_noise_floor(sim), "l_thr_db": l_thr, "l_trnc_db": l_trnc},
        "heights": list(sim.rx_heights),
        "split_ratios": list(ratios),
        "splits": split_dataset(range(n_envs), ratios, base.spawn(SPLIT_TAG)),
        "samples": samples,
    }
    write_manifest(root / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    m = json.loads(path.read_text())
    if m.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a dataset manifest")
    if m.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported dataset manifest version {m.get('version')}")
    m["_root"] = str(path.parent)
    return m


@dataclass
class ArrayDataset:
    """In-memory (inputs, targets) pair, batched along axis 0."""
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.targets)} targets")

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx) -> "ArrayDataset":
        return ArrayDataset(self.inputs[idx], self.targets[idx])


def sample_input(image_stack: np.ndarray, tx: int) -> np.ndarray:
    return np.stack([image_stack[0], image_stack[1], image_stack[2 + tx]])


def load_split(manifest: dict, split: str) -> ArrayDataset:
    root = Path(manifest["_root"])
    envs = set(manifest["splits"][split])
    picked = [s for s in manifest["samples"] if s["env_id"] in envs]
    if not picked:
        raise ValueError(f"split {split!r} is empty")
    images: dict = {}
    xs, ys = [], []
    for s in picked:
        if s["image"] not in images:
            images[s["image"]] = load_tensor(root / s["image"])
        xs.append(sample_input(images[s["image"]], s["tx"]))
        ys.append(load_tensor(root / s["map"]))
    return ArrayDataset(np.stack(xs).astype(np.float32), np.stack(ys).astype(np.float32))


def load_environment(manifest: dict, env_id: int) -> Environment:
    return Environment.load(Path(manifest["_root"]) / "envs" / f"{_env_name(env_id)}.json")
