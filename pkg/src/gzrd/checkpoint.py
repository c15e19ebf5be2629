"""Self-describing binary checkpoints.

Layout::

    b"GZRD1" | uint32 LE header length | UTF-8 JSON header | tensor payload

The header carries the model config, the storage precision, the init seed,
a manifest ``name -> {shape, offset}`` into the payload, and the payload's
SHA-256.  Tensors are raw little-endian, row-major, in manifest order.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, GzrdError
from .model import Model, ModelConfig, param_shapes

MAGIC = b"GZRD1"
_LEN = struct.Struct("<I")
PRECISIONS = {"float32": "<f4", "float64": "<f8"}


def checkpoint_bytes(model: Model, extra: dict | None = None) -> bytes:
    precision = np.dtype(model.dtype).name
    if precision not in PRECISIONS:
        raise CheckpointError(f"unsupported precision {precision}")
    dt = np.dtype(PRECISIONS[precision])
    chunks, manifest, offset = [], {}, 0
    for name, shape in param_shapes(model.cfg).items():
        raw = np.ascontiguousarray(model.params[name], dtype=dt).tobytes()
        manifest[name] = {"shape": list(shape), "offset": offset}
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format": 1,
        "config": model.cfg.to_dict(),
        "precision": precision,
        "init_seed": model.seed,
        "tensors": manifest,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + _LEN.pack(len(blob)) + blob + payload


def save_checkpoint(model: Model, path, extra: dict | None = None) -> Path:
    path = Path(path)
    data = checkpoint_bytes(model, extra)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def _split(data: bytes) -> tuple[dict, bytes]:
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    start = len(MAGIC) + _LEN.size
    if len(data) < start:
        raise CheckpointError("checkpoint truncated inside the header length")
    (n,) = _LEN.unpack_from(data, len(MAGIC))
    if len(data) < start + n:
        raise CheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(data[start : start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    return header, data[start + n :]


def read_header(path) -> dict:
    return _split(Path(path).read_bytes())[0]


def parse_checkpoint(data: bytes) -> tuple[Model, dict]:
    header, payload = _split(data)
    try:
        cfg = ModelConfig.from_dict(header["config"])
        dt = np.dtype(PRECISIONS[header["precision"]])
        manifest = header["tensors"]
        expected_len = header["payload_bytes"]
        digest = header["payload_sha256"]
    except (KeyError, TypeError, GzrdError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc!r}") from exc
    if len(payload) != expected_len:
        raise CheckpointError(f"payload is {len(payload)} bytes, header says {expected_len}")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise CheckpointError("payload checksum mismatch")
    shapes = param_shapes(cfg)
    if set(manifest) != set(shapes):
        raise CheckpointError("tensor names do not match the stored config")
    params = {}
    for name, shape in shapes.items():
        entry = manifest[name]
        if tuple(entry["shape"]) != shape:
            raise CheckpointError(f"{name}: stored shape {entry['shape']} does not match config {list(shape)}")
        nbytes = math.prod(shape) * dt.itemsize
        off = entry["offset"]
        if off < 0 or off + nbytes > len(payload):
            raise CheckpointError(f"{name}: offset out of range")
        params[name] = np.frombuffer(payload, dtype=dt, count=math.prod(shape), offset=off).reshape(shape).astype(dt.newbyteorder("="))
    return Model(cfg, params, seed=int(header.get("init_seed", 0))), header.get("extra", {})


def load_checkpoint(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_checkpoint(path.read_bytes())[0]
