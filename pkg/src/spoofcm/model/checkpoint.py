"""Checkpoint directories: ``manifest.json`` plus one raw array file per tensor.

Arrays are written little-endian in the model dtype (float32 for trained
models), so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .config import ModelConfig
from .resnet import SpoofNet

FORMAT = "spoofcm-checkpoint/1"


def _entries(model: SpoofNet):
    for name, p in model.named_parameters():
        yield name, "param", p.data, None
    for name, (owner, attr) in model.named_buffers():
        yield name, "buffer", owner._buffers[attr], (owner, attr)


def save_checkpoint(model: SpoofNet, path, step: int = 0, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = []
    for name, kind, arr, _ in _entries(model):
        fname = f"{name}.bin"
        dt = arr.dtype.newbyteorder("<")
        (path / fname).write_bytes(np.ascontiguousarray(arr, dtype=dt).tobytes())
        tensors.append({"name": name, "kind": kind, "shape": list(arr.shape),
                        "dtype": arr.dtype.name, "file": fname})
    manifest = {
        "format": FORMAT,
        "config": model.cfg.to_dict(),
        "dtype": model.dtype.name,
        "step": int(step),
        "tensors": tensors,
    }
    if extra:
        manifest["extra"] = extra
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple:
    """Rebuild the model stored at ``path``; returns ``(model, manifest)``."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: no manifest.json") from None
    if manifest.get("format") != FORMAT:
        raise FormatError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    cfg = ModelConfig.from_dict(manifest["config"])
    model = SpoofNet(cfg, seed=0, dtype=np.dtype(manifest["dtype"]))
    stored = {t["name"]: t for t in manifest["tensors"]}
    expected = list(_entries(model))
    if set(stored) != {name for name, *_ in expected}:
        missing = {name for name, *_ in expected} - set(stored)
        raise FormatError(f"{path}: checkpoint does not match its config (missing {sorted(missing)})")
    params = dict(model.named_parameters())
    for name, kind, arr, owner in expected:
        meta = stored[name]
        dt = np.dtype(meta["dtype"]).newbyteorder("<")
        data = np.frombuffer((path / meta["file"]).read_bytes(), dtype=dt)
        if data.size != int(np.prod(meta["shape"])) or tuple(meta["shape"]) != arr.shape:
            raise FormatError(f"{path}: {name} has shape {meta['shape']}, model expects {arr.shape}")
        data = data.reshape(arr.shape).astype(arr.dtype)
        if kind == "param":
            params[name].data = data
        else:
            obj, attr = owner
            obj._buffers[attr] = data
    return model, manifest
