"""Checkpoint serialization.

Layout: magic "CSNCKPT1", 32-byte config digest, then one record per named
tensor: u16 LE name length, UTF-8 name, a T4F tensor block, and a partition
flag byte (0 = outside the normalization layer, 1 = inside). The gate
sharpness epsilon rides along as a scalar record ("csnorm.epsilon") so a
checkpoint alone rebuilds bit-identical forward behavior; the loader treats
it as layer config, not a trainable parameter.
"""

from __future__ import annotations

import struct
from typing import Dict, Optional, Tuple

import numpy as np

from .model import ToyBackbone
from .tensor import t4f_bytes, t4f_from_bytes

MAGIC = b"CSNCKPT1"
EPSILON_RECORD = "csnorm.epsilon"


def save_checkpoint(path, model: ToyBackbone, config_digest: bytes) -> None:
    if len(config_digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    named = model.named_params()
    part = model.partition()
    inside = set(part.inside)
    chunks = [MAGIC, config_digest]
    records = [(name, named[name].data, 1 if name in inside else 0)
               for name in sorted(named)]
    if model.csnorm is not None:
        records.append((EPSILON_RECORD,
                        np.full((1, 1, 1, 1), model.csnorm.epsilon), 1))
    for name, data, flag in records:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(t4f_bytes(data))
        chunks.append(bytes([flag]))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _parse(path) -> Tuple[bytes, Dict[str, np.ndarray], Dict[str, int]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 40 or blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    digest = blob[8:40]
    rest = blob[40:]
    tensors: Dict[str, np.ndarray] = {}
    flags: Dict[str, int] = {}
    while rest:
        if len(rest) < 2:
            raise ValueError(f"{path}: truncated record header")
        (name_len,) = struct.unpack("<H", rest[:2])
        if len(rest) < 2 + name_len:
            raise ValueError(f"{path}: truncated record name")
        name = rest[2:2 + name_len].decode("utf-8")
        arr, rest = t4f_from_bytes(rest[2 + name_len:])
        if not rest:
            raise ValueError(f"{path}: missing partition flag for {name}")
        flags[name] = rest[0]
        tensors[name] = arr
        rest = rest[1:]
    return digest, tensors, flags


def load_checkpoint(path, expected_digest: Optional[bytes] = None,
                    model: Optional[ToyBackbone] = None) -> Tuple[ToyBackbone, bytes]:
    """Restore a model from a checkpoint; returns (model, stored digest).

    With `expected_digest`, a differing stored digest is an error. With
    `model`, parameters load into it and the name sets must match exactly;
    otherwise the architecture is rebuilt from the stored names and shapes.
    """
    digest, tensors, flags = _parse(path)
    if expected_digest is not None and digest != expected_digest:
        raise ValueError(f"{path}: config digest mismatch")

    epsilon = None
    if EPSILON_RECORD in tensors:
        epsilon = float(tensors.pop(EPSILON_RECORD)[0, 0, 0, 0])
        flags.pop(EPSILON_RECORD)

    if model is None:
        if "enc1.w" not in tensors:
            raise ValueError(f"{path}: missing backbone parameters")
        base, in_channels = tensors["enc1.w"].shape[:2]
        with_csnorm = "csnorm.gamma" in tensors
        model = ToyBackbone(in_channels=in_channels, base=base, with_csnorm=with_csnorm,
                            epsilon=epsilon if epsilon is not None else 1e-4)

    named = model.named_params()
    if set(named) != set(tensors):
        missing = sorted(set(named) - set(tensors))
        extra = sorted(set(tensors) - set(named))
        raise ValueError(f"{path}: parameter set mismatch "
                         f"(missing {missing}, unexpected {extra})")
    for name, param in named.items():
        if param.shape != tensors[name].shape:
            raise ValueError(f"{path}: shape mismatch for {name}: "
                             f"{tensors[name].shape} vs {param.shape}")
        param.data = tensors[name].copy()
    if model.csnorm is not None and epsilon is not None:
        model.csnorm.epsilon = epsilon
    part = model.partition()
    inside = set(part.inside)
    for name, flag in flags.items():
        if bool(flag) != (name in inside):
            raise ValueError(f"{path}: partition flag mismatch for {name}")
    return model, digest
