"""Checkpoint file: ``b"HVPC"``, version byte, u32 length + JSON header, then HVPT tensors.

The JSON header holds the model config, parameter names in storage order and
the optimizer step. Tensors follow in that order, one HVPT record each.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import hvpt
from .config import ModelConfig
from .errors import ConfigError, FormatError
from .model import HEAD_PREFIXES, HVPModel

MAGIC = b"HVPC"
VERSION = 1
# Fields that only shape the task head; ignored when the head is not loaded.
HEAD_FIELDS = ("task", "num_tags", "num_relations")


def save_checkpoint(path, model: HVPModel, optim_step: int | None = None, extra: dict | None = None) -> None:
    params = model.named_params()
    header = {"config": model.cfg.to_dict(), "param_names": list(params),
              "optim_step": optim_step, "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC + bytes([VERSION]) + struct.pack("<I", len(blob)) + blob)
        for p in params.values():
            hvpt.write_tensor(f, p.data)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """(header, {name: float32 array})."""
    buf = Path(path).read_bytes()
    if len(buf) < 9 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic at offset 0")
    if buf[4] != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {buf[4]} at offset 4")
    (n,) = struct.unpack_from("<I", buf, 5)
    if 9 + n > len(buf):
        raise FormatError(f"{path}: header truncated at offset 9")
    header = json.loads(buf[9:9 + n].decode("utf-8"))
    pos = 9 + n
    tensors = {}
    for name in header["param_names"]:
        tensors[name], pos = hvpt.decode(buf, pos)
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes at offset {pos}")
    return header, tensors


def config_diff(a: ModelConfig, b: ModelConfig, ignore=()) -> list[str]:
    da, db = a.to_dict(), b.to_dict()
    return [f"{k}: {da[k]!r} != {db[k]!r}" for k in da if k not in ignore and da[k] != db[k]]


def load_checkpoint(path, include_heads: bool = True, expect: ModelConfig | None = None,
                    seed: int = 0) -> tuple[HVPModel, dict]:
    """Rebuild a model from ``path``.

    With ``include_heads=False`` the CRF / relation head is freshly initialised
    from ``seed`` and everything else is loaded; ``expect`` may then name a
    different task. Any other config difference from ``expect`` is an error.
    """
    header, tensors = read_checkpoint(path)
    stored = ModelConfig.from_dict(header["config"])
    cfg = stored
    if expect is not None:
        ignore = () if include_heads else HEAD_FIELDS
        diff = config_diff(stored, expect, ignore)
        if diff:
            raise ConfigError("checkpoint config differs from the requested one: " + "; ".join(diff))
        cfg = expect
    model = HVPModel(cfg, seed=seed)
    for name, p in model.named_params().items():
        if not include_heads and name.startswith(HEAD_PREFIXES):
            continue
        if name not in tensors:
            raise FormatError(f"{path}: parameter {name} missing")
        if tensors[name].shape != p.shape:
            raise FormatError(f"{path}: {name} has shape {tensors[name].shape}, model expects {p.shape}")
        p.data[...] = tensors[name]
    return model, header
