"""Self-describing checkpoint files.

Layout: the 8-byte magic ``ADATTCK1``, a little-endian uint64 header length,
a UTF-8 JSON header, then every parameter's data as little-endian float32 in
header order.  The header records the architecture, its config, the input
front end, optional caller metadata, and ``name``/``shape``/``offset`` for
each parameter blob (offsets are relative to the end of the header).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .base import FrontendSpec, MultiTaskModel
from .registry import build_model, config_to_dict, make_config

MAGIC = b"ADATTCK1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: MultiTaskModel, path: str | Path, extra: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    blobs, entries, offset = [], [], 0
    for name, t in model.named_parameters().items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": "adatt-checkpoint",
        "version": 1,
        "kind": model.kind,
        "seed": model.seed,
        "config": config_to_dict(model.config),
        "frontend": model.frontend_spec.to_dict() if model.frontend_spec else None,
        "extra": extra or {},
        "params": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    return path


def read_header(path: str | Path) -> tuple[dict[str, Any], bytes]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror or exc})") from exc
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an adatt checkpoint")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + n:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[16 : 16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    return header, data[16 + n :]


def load_checkpoint(path: str | Path) -> tuple[MultiTaskModel, dict[str, Any]]:
    """Rebuild the model described by the file and load its parameters.
    Returns ``(model, extra)``."""
    header, body = read_header(path)
    kind = header["kind"]
    config = make_config(kind, **header["config"])
    frontend = FrontendSpec(**header["frontend"]) if header.get("frontend") else None
    model = build_model(kind, config, header.get("seed", 0), frontend)
    state = {}
    for e in header["params"]:
        chunk = body[e["offset"] : e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated blob for {e['name']}")
        state[e["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(e["shape"])
    model.load_state_dict(state)
    return model, header.get("extra", {})
