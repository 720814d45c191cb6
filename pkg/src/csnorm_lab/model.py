"""Toy convolutional enhancer with an optional gated-normalization slot.

Encoder 3->16->32 and decoder 32->16->3, all 3x3 stride-1 pad-1 convs with
ReLU between (no activation on the output; the loss keeps it in range).
The slot sits on the 32-channel feature between encoder and decoder. Small
on purpose: one CPU core trains it in seconds, which is the point.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as T
from .csnorm import CSNormLayer, DEFAULT_EPSILON, csnorm_forward
from .rng import stream
from .tensor import Tensor4


@dataclass
class ParamPartition:
    """Names of trainable parameters inside vs outside the normalization layer."""
    inside: List[str]
    outside: List[str]

    def validate(self, named: Dict[str, Tensor4]) -> None:
        both = set(self.inside) & set(self.outside)
        if both:
            raise ValueError(f"parameters in both partitions: {sorted(both)}")
        covered = set(self.inside) | set(self.outside)
        if covered != set(named):
            raise ValueError("partition does not cover the parameter set exactly")


class ToyBackbone:
    def __init__(self, seed: int = 0, in_channels: int = 3, base: int = 16,
                 with_csnorm: bool = False, epsilon: float = DEFAULT_EPSILON,
                 gate_mode: str = "learned"):
        self.in_channels = in_channels
        self.base = base
        self.gate_mode = gate_mode
        wide = 2 * base

        def conv_param(name, shape):
            rng = stream(seed, "init", name)
            return Tensor4(T.uniform_fan_in(shape, rng), needs_grad=True, name=name)

        def bias_param(name, channels):
            return Tensor4(np.zeros((1, channels, 1, 1)), needs_grad=True, name=name)

        self.enc1_w = conv_param("enc1.w", (base, in_channels, 3, 3))
        self.enc1_b = bias_param("enc1.b", base)
        self.enc2_w = conv_param("enc2.w", (wide, base, 3, 3))
        self.enc2_b = bias_param("enc2.b", wide)
        self.dec1_w = conv_param("dec1.w", (base, wide, 3, 3))
        self.dec1_b = bias_param("dec1.b", base)
        self.dec2_w = conv_param("dec2.w", (in_channels, base, 3, 3))
        self.dec2_b = bias_param("dec2.b", in_channels)
        self.csnorm: Optional[CSNormLayer] = None
        if with_csnorm:
            self.csnorm = CSNormLayer(wide, epsilon=epsilon, seed=seed)

    def forward(self, x: Tensor4) -> Tensor4:
        h = T.relu(T.add(T.conv2d(x, self.enc1_w, 1, 1), self.enc1_b))
        h = T.relu(T.add(T.conv2d(h, self.enc2_w, 1, 1), self.enc2_b))
        if self.csnorm is not None:
            h = csnorm_forward(h, self.csnorm, self.gate_mode)
        h = T.relu(T.add(T.conv2d(h, self.dec1_w, 1, 1), self.dec1_b))
        return T.add(T.conv2d(h, self.dec2_w, 1, 1), self.dec2_b)

    def features(self, x: Tensor4) -> Tensor4:
        """Encoder output, i.e. the tensor the normalization slot sees."""
        h = T.relu(T.add(T.conv2d(x, self.enc1_w, 1, 1), self.enc1_b))
        return T.relu(T.add(T.conv2d(h, self.enc2_w, 1, 1), self.enc2_b))

    def named_params(self) -> Dict[str, Tensor4]:
        named = {p.name: p for p in (
            self.enc1_w, self.enc1_b, self.enc2_w, self.enc2_b,
            self.dec1_w, self.dec1_b, self.dec2_w, self.dec2_b)}
        if self.csnorm is not None:
            named.update(self.csnorm.named_params())
        return named

    def partition(self) -> ParamPartition:
        inside = sorted(self.csnorm.named_params()) if self.csnorm is not None else []
        outside = sorted(set(self.named_params()) - set(inside))
        part = ParamPartition(inside=inside, outside=outside)
        part.validate(self.named_params())
        return part

    def predict(self, x: Tensor4) -> np.ndarray:
        """Forward pass clamped to [0, 1]; evaluation path, no gradients kept."""
        return np.clip(self.forward(x).data, 0.0, 1.0)


@dataclass
class TrainConfig:
    epochs: int = 20
    steps_per_epoch: int = 6
    batch_size: int = 4
    step2_per_step1: int = 1       # alternation ratio
    lr_out: float = 1e-2
    lr_in: float = 1e-2
    delta: float = 1.0
    epsilon: float = DEFAULT_EPSILON
    lambda_lo: float = 0.0
    lambda_hi: float = 1.0
    optimizer: str = "sgd"         # "sgd" | "adam"
    seed: int = 0
    checkpoint_path: str = ""

    def __post_init__(self):
        if self.lr_out <= 0 or self.lr_in <= 0:
            raise ValueError("learning rates must be positive")
        if self.step2_per_step1 < 0:
            raise ValueError("alternation ratio must be >= 0")
        if not (0.0 <= self.lambda_lo <= self.lambda_hi <= 1.0):
            raise ValueError("lambda range must satisfy 0 <= lo <= hi <= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def canonical(self) -> str:
        parts = []
        for f in fields(self):
            if f.name == "checkpoint_path":
                continue  # output location, not training behavior
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(parts)

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode("utf-8")).digest()
