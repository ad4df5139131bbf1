"""On-disk formats: the RMT1 tensor record and the two-file checkpoint.

Tensor record: b"RMT" + version byte, u32 LE rank, u32 LE extents, f32 LE data.
Checkpoint: ``<name>.json`` manifest + ``<name>.bin`` blob of tensor records;
the manifest lists every record's name, shape, byte offset and length.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RMT"
VERSION = b"1"
CHECKPOINT_FORMAT = "radiomap-checkpoint"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def encode_tensor(arr) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + VERSION + struct.pack(f"<{1 + a.ndim}I", a.ndim, *a.shape)
    return header + a.tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one record at ``offset``; returns (array, offset just past it)."""
    if len(buf) - offset < 8:
        raise FormatError("truncated tensor record")
    magic = bytes(buf[offset:offset + 3])
    version = bytes(buf[offset + 3:offset + 4])
    if magic != MAGIC:
        raise FormatError(f"not a tensor record (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported tensor format version {version!r}, expected {VERSION!r}")
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    pos = offset + 8
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    end = pos + 4 * count
    if end > len(buf):
        raise FormatError(f"tensor record claims shape {shape} but data is truncated")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).astype(np.float32).reshape(shape)
    return data, end


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def save_tensor(path, arr) -> None:
    _atomic_write(Path(path), encode_tensor(arr))


def load_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after tensor record")
    return arr


def save_checkpoint(path, tensors: dict, meta: dict) -> None:
    """Write ``path`` (JSON manifest) and its sibling ``.bin`` blob.

    ``tensors`` maps record names to arrays; ``meta`` is any JSON-able dict
    (optimizer scalars, random-stream state, history...).
    """
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    records, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        enc = encode_tensor(arr)
        records.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "length": len(enc)})
        chunks.append(enc)
        offset += len(enc)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "blob": blob_path.name,
        "tensors": records,
        "meta": meta,
    }
    _atomic_write(blob_path, b"".join(chunks))
    _atomic_write(path, (json.dumps(manifest, indent=1, sort_keys=True) + "\n").encode())


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
    buf = (path.parent / manifest["blob"]).read_bytes()
    tensors = {}
    for rec in manifest["tensors"]:
        arr, end = decode_tensor(buf, rec["offset"])
        if end - rec["offset"] != rec["length"] or list(arr.shape) != rec["shape"]:
            raise FormatError(f"{path}: record {rec['name']} disagrees with its manifest entry")
        tensors[rec["name"]] = arr
    return tensors, manifest["meta"]
