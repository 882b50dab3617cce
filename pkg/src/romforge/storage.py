"""On-disk formats: snapshot datasets, network checkpoints, JSON reports.

All formats are deterministic: little-endian raw arrays, JSON with sorted
keys and a trailing newline, and no timestamps anywhere. Writing the same
in-memory objects twice produces byte-identical files, which the pipeline
relies on for reproducibility checks.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"ROMFORGE"
CHECKPOINT_VERSION = 1

_DTYPE_TAGS = {0: "<f4", 1: "<f8", 2: "|u1", 3: "<i8"}
_TAG_FOR_KIND = {
    ("f", 4): 0,
    ("f", 8): 1,
    ("u", 1): 2,
    ("i", 8): 3,
}


class StorageError(ValueError):
    """Malformed or inconsistent on-disk artifact."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_array(arr: np.ndarray) -> str:
    return sha256_bytes(np.ascontiguousarray(arr).tobytes())


def write_json(path, obj) -> None:
    """Write canonical JSON: sorted keys, 2-space indent, trailing newline."""
    text = json.dumps(jsonify(obj), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def jsonify(obj):
    """Recursively convert numpy scalars/arrays into plain python values."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# snapshot dataset directories


@dataclass
class SnapshotDataset:
    """In-memory image of a dataset directory.

    ``params`` is (N, k) float32, ``masks`` (N, H, W) uint8 and
    ``solutions`` (N, H, W) float32 or None for bitmap-only sets.
    """

    problem: str
    seed: int
    grid_hw: tuple[int, int]
    param_schema: tuple[str, ...]
    params: np.ndarray
    masks: np.ndarray
    solutions: np.ndarray | None = None
    hole_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        n, k = self.params.shape
        if k != len(self.param_schema):
            raise StorageError(
                f"param matrix has {k} columns, schema names {len(self.param_schema)}"
            )
        h, w = self.grid_hw
        if self.masks.shape != (n, h, w):
            raise StorageError(
                f"mask array shape {self.masks.shape} != ({n}, {h}, {w})"
            )
        if self.solutions is not None and self.solutions.shape != (n, h, w):
            raise StorageError(
                f"solution array shape {self.solutions.shape} != ({n}, {h}, {w})"
            )

    @property
    def count(self) -> int:
        return self.params.shape[0]

    @property
    def has_solutions(self) -> bool:
        return self.solutions is not None

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.params).tobytes())
        h.update(np.ascontiguousarray(self.masks).tobytes())
        if self.solutions is not None:
            h.update(np.ascontiguousarray(self.solutions).tobytes())
        return h.hexdigest()


def save_dataset(dataset: SnapshotDataset, path) -> None:
    """Write a dataset directory: manifest.json plus raw array files."""
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    params = np.ascontiguousarray(dataset.params, dtype="<f4")
    masks = np.ascontiguousarray(dataset.masks, dtype="|u1")
    (d / "params.f32le").write_bytes(params.tobytes())
    (d / "masks.u8").write_bytes(masks.tobytes())
    files = {
        "masks.u8": sha256_array(masks),
        "params.f32le": sha256_array(params),
    }
    if dataset.solutions is not None:
        sols = np.ascontiguousarray(dataset.solutions, dtype="<f4")
        (d / "solutions.f32le").write_bytes(sols.tobytes())
        files["solutions.f32le"] = sha256_array(sols)
    manifest = {
        "format": "romforge-dataset",
        "version": 1,
        "problem": dataset.problem,
        "seed": dataset.seed,
        "count": dataset.count,
        "param_dim": dataset.params.shape[1],
        "param_schema": list(dataset.param_schema),
        "grid": [dataset.grid_hw[0], dataset.grid_hw[1]],
        "has_solutions": dataset.has_solutions,
        "hole_counts": (
            list(dataset.hole_counts) if dataset.hole_counts is not None else None
        ),
        "sha256": files,
    }
    write_json(d / "manifest.json", manifest)


def _read_array_file(d: Path, name: str, dtype: str, expect: int,
                     digests: dict) -> np.ndarray:
    raw = (d / name).read_bytes()
    if name in digests and sha256_bytes(raw) != digests[name]:
        raise StorageError(f"{name} does not match its manifest sha256")
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != expect:
        raise StorageError(
            f"{name} holds {arr.size} values, manifest expects {expect}"
        )
    return arr


def load_dataset(path) -> SnapshotDataset:
    """Read a dataset directory back, verifying shapes and digests against
    the manifest."""
    d = Path(path)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise StorageError(f"no manifest.json under {d}")
    m = read_json(manifest_path)
    if m.get("format") != "romforge-dataset":
        raise StorageError(f"{manifest_path} is not a dataset manifest")
    n = int(m["count"])
    k = int(m["param_dim"])
    h, w = (int(v) for v in m["grid"])
    digests = m.get("sha256", {})
    params = _read_array_file(d, "params.f32le", "<f4", n * k, digests)
    masks = _read_array_file(d, "masks.u8", "|u1", n * h * w, digests)
    solutions = None
    if m["has_solutions"]:
        raw = _read_array_file(d, "solutions.f32le", "<f4", n * h * w, digests)
        solutions = raw.reshape(n, h, w).copy()
    hole_counts = m.get("hole_counts")
    return SnapshotDataset(
        problem=m["problem"],
        seed=int(m["seed"]),
        grid_hw=(h, w),
        param_schema=tuple(m["param_schema"]),
        params=params.reshape(n, k).copy(),
        masks=masks.reshape(n, h, w).copy(),
        solutions=solutions,
        hole_counts=tuple(int(c) for c in hole_counts) if hole_counts else None,
    )


# ---------------------------------------------------------------------------
# checkpoints: named arrays + JSON metadata in one binary file


def _dtype_tag(arr: np.ndarray) -> int:
    key = (arr.dtype.kind, arr.dtype.itemsize)
    if key not in _TAG_FOR_KIND:
        raise StorageError(f"dtype {arr.dtype} is not checkpointable")
    return _TAG_FOR_KIND[key]


def write_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Serialize named arrays plus a JSON metadata trailer.

    Layout: 8-byte magic, u32 format version, u32 array count, then per
    array a u32 name length, the UTF-8 name, a u8 dtype tag, u32 rank,
    u64 dims and the raw little-endian data; finally a u64 trailer length
    and the JSON metadata. Arrays are written in sorted name order.
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = arrays[name]
        tag = _dtype_tag(arr)
        data = np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes()
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<BI", tag, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(data)
    trailer = json.dumps(jsonify(meta), sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<Q", len(trailer)))
    chunks.append(trailer)
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise StorageError(f"{path} is not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise StorageError(f"unsupported checkpoint version {version}")
    off = 16
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        tag, rank = struct.unpack_from("<BI", raw, off)
        off += 5
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        if tag not in _DTYPE_TAGS:
            raise StorageError(f"unknown dtype tag {tag} in {path}")
        dt = np.dtype(_DTYPE_TAGS[tag])
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if off + size * dt.itemsize > len(raw):
            raise StorageError(f"truncated checkpoint {path}")
        arr = np.frombuffer(raw, dtype=dt, count=size, offset=off).reshape(dims)
        off += size * dt.itemsize
        arrays[name] = arr.copy()
    (trailer_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    meta = json.loads(raw[off : off + trailer_len].decode("utf-8"))
    return arrays, meta
