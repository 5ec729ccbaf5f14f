"""Model checkpoints: a versioned little-endian tensor blob plus a JSON sidecar.

Blob layout::

    b"EKCK" | u32 version | u32 n_tensors
    per tensor: u16 name_len | name (utf-8) | u32 ndim | u32 dims[ndim] | f32 data (row-major)

Boolean buffers are stored as 0/1 floats and restored from the module's own dtype.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .scene import CSpace

MAGIC = b"EKCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + ln].decode()
        off += ln
        (nd,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
        count = int(np.prod(dims)) if nd else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims).copy()
        off += 4 * count
    return out


def _space_doc(space: CSpace) -> dict:
    return {"tag": space.tag, "lower": space.lower.tolist(), "upper": space.upper.tolist(),
            "periodic": space.periodic.tolist(), "weights": space.weights.tolist()}


def _space_from_doc(doc: dict) -> CSpace:
    return CSpace(doc["tag"], np.asarray(doc["lower"], float), np.asarray(doc["upper"], float),
                  np.asarray(doc["periodic"], bool), np.asarray(doc["weights"], float))


def save_model(model: torch.nn.Module, path: str | Path, space: CSpace, meta: dict | None = None) -> None:
    """Persist a ``TimeField`` or ``SadfModel`` with enough metadata to rebuild it."""
    from .field import TimeField
    from .sadf import SadfModel

    kind = "time_field" if isinstance(model, TimeField) else "sadf" if isinstance(model, SadfModel) else None
    if kind is None:
        raise CheckpointError(f"cannot checkpoint {type(model).__name__}")
    state = {k: v.detach().cpu().double().numpy() for k, v in model.state_dict().items()}
    write_tensors(path, state)
    doc = {"format": "eikoplan-checkpoint", "version": VERSION, "kind": kind,
           "arch": model.arch, "space": _space_doc(space), "meta": meta or {}}
    if kind == "sadf":
        doc["robot"] = model.robot_name
    sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_model(path: str | Path, robot=None):
    """Return ``(model, sidecar_doc)``. SADF checkpoints need the robot they were trained for."""
    from .field import TimeField
    from .sadf import SadfModel

    side = sidecar_path(path)
    if not side.exists():
        raise CheckpointError(f"checkpoint metadata not found: {side}")
    doc = json.loads(side.read_text())
    tensors = read_tensors(path)
    space = _space_from_doc(doc["space"])
    if doc["kind"] == "time_field":
        model = TimeField(space, **doc["arch"])
    elif doc["kind"] == "sadf":
        if robot is None:
            raise CheckpointError("loading a SADF checkpoint requires its robot shape")
        model = SadfModel(robot, space, **doc["arch"])
    else:
        raise CheckpointError(f"unknown checkpoint kind {doc['kind']!r}")
    state = model.state_dict()
    missing = set(state) - set(tensors)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    model.load_state_dict({k: torch.as_tensor(tensors[k]).to(state[k].dtype).reshape(state[k].shape)
                           for k in state})
    model.eval()
    return model, doc
