"""Versioned binary containers for recordings, memory graphs, and model
weights.

Each file is: 6 magic bytes, a u32 little-endian JSON header length, the
UTF-8 JSON header, then raw data blobs whose sizes the header declares.
Readers validate magic and sizes and fail loudly on truncation.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .memory import GraphParams, MemoryGraph
from .nets import LocomotionPolicy, SimilarityModel
from .recording import ExplorationRecording

RECORDING_MAGIC = b"SPTMR1"
GRAPH_MAGIC = b"SPTMG1"
WEIGHTS_MAGIC = b"SPTMW1"


class FormatError(ValueError):
    pass


def _write_container(path, magic: bytes, header: dict, blobs: list[bytes]) -> None:
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        for b in blobs:
            f.write(b)


def _read_container(path, magic: bytes) -> tuple[dict, memoryview]:
    data = Path(path).read_bytes()
    if len(data) < len(magic) + 4 or data[: len(magic)] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} file")
    n = struct.unpack("<I", data[len(magic): len(magic) + 4])[0]
    start = len(magic) + 4
    if len(data) < start + n:
        raise FormatError(f"{path}: truncated header")
    header = json.loads(data[start: start + n].decode("utf-8"))
    return header, memoryview(data)[start + n:]


def _take(buf: memoryview, nbytes: int, what: str, path) -> tuple[memoryview, memoryview]:
    if len(buf) < nbytes:
        raise FormatError(f"{path}: truncated {what} ({len(buf)} of {nbytes} bytes)")
    return buf[:nbytes], buf[nbytes:]


# ---------------------------------------------------------------------------
# Recordings

def save_recording(rec: ExplorationRecording, path) -> None:
    t1, h, w, _ = rec.frames.shape
    header = {
        "maze": rec.maze_name,
        "frames": int(t1),
        "height": int(h),
        "width": int(w),
        "has_poses": rec.poses is not None,
    }
    blobs = [rec.frames.tobytes(), rec.actions.astype(np.int8).tobytes()]
    if rec.poses is not None:
        blobs.append(rec.poses.astype("<f8").tobytes())
    _write_container(path, RECORDING_MAGIC, header, blobs)


def load_recording(path) -> ExplorationRecording:
    header, buf = _read_container(path, RECORDING_MAGIC)
    t1, h, w = header["frames"], header["height"], header["width"]
    raw, buf = _take(buf, t1 * h * w * 3, "frames", path)
    frames = np.frombuffer(raw, dtype=np.uint8).reshape(t1, h, w, 3).copy()
    raw, buf = _take(buf, t1 - 1, "actions", path)
    actions = np.frombuffer(raw, dtype=np.int8).copy()
    poses = None
    if header["has_poses"]:
        raw, buf = _take(buf, t1 * 3 * 8, "poses", path)
        poses = np.frombuffer(raw, dtype="<f8").reshape(t1, 3).copy()
    return ExplorationRecording(frames=frames, actions=actions, poses=poses,
                                maze_name=header["maze"])


# ---------------------------------------------------------------------------
# Memory graphs

def save_graph(g: MemoryGraph, path) -> None:
    n, _, h, w, _ = g.observations.shape
    header = {
        "maze": g.maze_name,
        "vertices": int(n),
        "height": int(h),
        "width": int(w),
        "embed_dim": int(g.embeddings.shape[1]),
        "edges": int(len(g.edges_u)),
        "params": {
            "subsample": g.params.subsample,
            "shortcut_count": g.params.shortcut_count,
            "min_shortcut_gap": g.params.min_shortcut_gap,
            "window": g.params.window,
        },
    }
    blobs = [
        g.observations.tobytes(),
        g.embeddings.astype("<f8").tobytes(),
        g.time_indices.astype("<i8").tobytes(),
        g.edges_u.astype("<u4").tobytes(),
        g.edges_v.astype("<u4").tobytes(),
        g.edge_tags.astype(np.uint8).tobytes(),
    ]
    _write_container(path, GRAPH_MAGIC, header, blobs)


def load_graph(path) -> MemoryGraph:
    header, buf = _read_container(path, GRAPH_MAGIC)
    n, h, w = header["vertices"], header["height"], header["width"]
    e = header["embed_dim"]
    m = header["edges"]
    raw, buf = _take(buf, n * 2 * h * w * 3, "observations", path)
    observations = np.frombuffer(raw, dtype=np.uint8).reshape(n, 2, h, w, 3).copy()
    raw, buf = _take(buf, n * e * 8, "embeddings", path)
    embeddings = np.frombuffer(raw, dtype="<f8").reshape(n, e).copy()
    raw, buf = _take(buf, n * 8, "time indices", path)
    time_indices = np.frombuffer(raw, dtype="<i8").copy()
    raw, buf = _take(buf, m * 4, "edge sources", path)
    edges_u = np.frombuffer(raw, dtype="<u4").astype(np.int32)
    raw, buf = _take(buf, m * 4, "edge targets", path)
    edges_v = np.frombuffer(raw, dtype="<u4").astype(np.int32)
    raw, buf = _take(buf, m, "edge tags", path)
    edge_tags = np.frombuffer(raw, dtype=np.uint8).copy()
    return MemoryGraph(
        observations=observations,
        embeddings=embeddings,
        time_indices=time_indices,
        edges_u=edges_u,
        edges_v=edges_v,
        edge_tags=edge_tags,
        params=GraphParams(**header["params"]),
        maze_name=header["maze"],
    )


# ---------------------------------------------------------------------------
# Model weights

def _param_manifest(params: dict[str, np.ndarray]) -> list[list]:
    return [[k, list(params[k].shape)] for k in sorted(params)]


def save_weights(model, path) -> None:
    """Works for both model kinds; the architecture descriptor is enough to
    rebuild the object, then parameters are loaded in manifest order."""
    header = {
        "arch": model.describe(),
        "params": _param_manifest(model.params),
    }
    blob = b"".join(model.params[k].astype("<f8").tobytes() for k, _ in header["params"])
    header["blob_len"] = len(blob)
    _write_container(path, WEIGHTS_MAGIC, header, [blob])


def load_weights(path):
    header, buf = _read_container(path, WEIGHTS_MAGIC)
    arch = dict(header["arch"])
    kind = arch.pop("kind")
    if kind == "similarity":
        model = SimilarityModel(**arch)
    elif kind == "locomotion":
        arch["hidden"] = tuple(arch["hidden"])
        model = LocomotionPolicy(**arch)
    else:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    raw, buf = _take(buf, header["blob_len"], "weights", path)
    flat = np.frombuffer(raw, dtype="<f8")
    pos = 0
    for name, shape in header["params"]:
        size = int(np.prod(shape)) if shape else 1
        if name not in model.params or list(model.params[name].shape) != list(shape):
            raise FormatError(f"{path}: parameter {name} {shape} does not fit the architecture")
        model.params[name][...] = flat[pos: pos + size].reshape(shape)
        pos += size
    if pos != len(flat):
        raise FormatError(f"{path}: weight blob length mismatch")
    return model
