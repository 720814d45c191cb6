"""Channel-selective normalization: instance norm + differentiable gating.

Each channel of each instance is standardized over its spatial extent and
re-scaled by learned per-channel affine parameters. A gating module (global
average pool -> two dense layers with one ReLU) produces one value per
instance and channel through g = a^2 / (a^2 + epsilon), which saturates
toward 0 or 1 and so acts as a soft on/off switch. The layer output mixes
the original and normalized channel, with the gate multiplying the
normalized branch:

    out = (1 - g) * x + g * norm(x)

so the lazy all-zero gate means "keep everything unchanged" and switching a
channel on costs reconstruction pressure only where normalization helps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import tensor as T
from .rng import stream
from .tensor import Tensor4

EPS_VAR = 1e-5          # variance guard inside the standardization
DEFAULT_EPSILON = 1e-4  # gate sharpness
GATE_LAST_SCALE = 1e-2  # shrink factor on the final gate-layer weights

SELECTED_THRESHOLD = 0.5  # reporting-only; never used in forward math


class CSNormLayer:
    """Per-channel affine parameters plus the gate MLP.

    The gate MLP maps C -> hidden -> C (hidden defaults to 2C). Its final
    layer is initialized small (standard fan-in scheme scaled by
    GATE_LAST_SCALE) so gates start near zero and the layer opens as an
    identity; exactly-zero init would park the gate on the flat point of
    g = a^2/(a^2+eps), where its gradient vanishes.
    """

    def __init__(self, channels: int, hidden: Optional[int] = None,
                 epsilon: float = DEFAULT_EPSILON, seed: int = 0,
                 name: str = "csnorm"):
        if channels < 1:
            raise ValueError("channels must be >= 1")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        hidden = 2 * channels if hidden is None else hidden
        self.channels = channels
        self.hidden = hidden
        self.epsilon = float(epsilon)
        self.name = name

        rng = stream(seed, "init", name)
        self.gamma = Tensor4(np.ones((1, channels, 1, 1)), needs_grad=True,
                             name=f"{name}.gamma")
        self.beta = Tensor4(np.zeros((1, channels, 1, 1)), needs_grad=True,
                            name=f"{name}.beta")
        self.gate_w1 = Tensor4(T.uniform_fan_in((hidden, channels, 1, 1), rng),
                               needs_grad=True, name=f"{name}.gate_w1")
        self.gate_b1 = Tensor4(np.zeros((1, hidden, 1, 1)), needs_grad=True,
                               name=f"{name}.gate_b1")
        self.gate_w2 = Tensor4(T.uniform_fan_in((channels, hidden, 1, 1), rng) * GATE_LAST_SCALE,
                               needs_grad=True, name=f"{name}.gate_w2")
        self.gate_b2 = Tensor4(np.zeros((1, channels, 1, 1)), needs_grad=True,
                               name=f"{name}.gate_b2")

    def params(self) -> List[Tensor4]:
        return [self.gamma, self.beta, self.gate_w1, self.gate_b1,
                self.gate_w2, self.gate_b2]

    def named_params(self):
        return {p.name: p for p in self.params()}


@dataclass
class GateState:
    """Per-(instance, channel) gate intermediates; arrays of shape (N, C)."""
    alpha: np.ndarray
    g: np.ndarray
    alpha_node: Tensor4
    g_node: Tensor4


def instance_norm(x: Tensor4, gamma: Tensor4, beta: Tensor4,
                  eps_var: float = EPS_VAR) -> Tensor4:
    """Standardize each (instance, channel) over space, then apply gamma/beta.

    Uses the biased spatial variance and sigma = sqrt(var + eps_var) so a
    constant channel maps to beta instead of dividing by zero.
    Differentiable through the statistics.
    """
    _, _, h, w = x.shape
    if h * w == 0:
        raise ValueError("instance_norm on empty spatial extent")
    mean, var = T.channel_stats(x)
    sigma = T.sqrt(T.add(var, eps_var))
    standardized = T.div(T.sub(x, mean), sigma)
    return T.add(T.mul(standardized, gamma), beta)


def gate_function(alpha: Tensor4, epsilon: float) -> Tensor4:
    """g = alpha^2 / (alpha^2 + epsilon); exactly 0 at alpha = 0, always < 1."""
    a2 = T.mul(alpha, alpha)
    return T.div(a2, T.add(a2, epsilon))


def gate_forward(x: Tensor4, layer: CSNormLayer) -> GateState:
    """Compute the gate values for a batch: pool to 1x1, run the MLP, squash."""
    if x.shape[1] != layer.channels:
        raise ValueError(
            f"gate_forward channel mismatch: input {x.shape[1]} vs layer {layer.channels}")
    pooled = T.global_avg_pool(x)
    hidden = T.relu(T.dense(pooled, layer.gate_w1, layer.gate_b1))
    alpha = T.dense(hidden, layer.gate_w2, layer.gate_b2)
    g = gate_function(alpha, layer.epsilon)
    n, c = x.shape[0], x.shape[1]
    return GateState(alpha=alpha.data.reshape(n, c).copy(),
                     g=g.data.reshape(n, c).copy(),
                     alpha_node=alpha, g_node=g)


def csnorm_forward(x: Tensor4, layer: CSNormLayer, gate_mode: str = "learned") -> Tensor4:
    """Gated mix of original and normalized channels.

    gate_mode "learned" evaluates the gate MLP; "off" is the exact g = 0
    degenerate case (identity), "on" the exact g = 1 case (plain instance
    norm) -- both short-circuit so the degenerate outputs are bit-identical
    to their closed forms.
    """
    if gate_mode == "off":
        return x
    if gate_mode == "on":
        return instance_norm(x, layer.gamma, layer.beta)
    if gate_mode != "learned":
        raise ValueError(f"unknown gate_mode {gate_mode!r}")
    normalized = instance_norm(x, layer.gamma, layer.beta)
    g = gate_forward(x, layer).g_node
    keep = T.sub(1.0, g)
    return T.add(T.mul(keep, x), T.mul(g, normalized))


def param_count(channels: int, hidden: int) -> int:
    """Trainable parameter count: affine pair + two-layer gate MLP."""
    if channels < 1 or hidden < 1:
        raise ValueError("channels and hidden must be >= 1")
    affine = 2 * channels
    layer1 = channels * hidden + hidden
    layer2 = hidden * channels + channels
    return affine + layer1 + layer2


@dataclass
class GateReportRow:
    batch: int
    channel: int
    alpha: float
    g: float
    selected: bool


def inspect_gates(x: Tensor4, layer: CSNormLayer) -> List[GateReportRow]:
    """Gate values and binary selection (g > 0.5) per instance and channel."""
    state = gate_forward(x, layer)
    rows = []
    n, c = state.g.shape
    for b in range(n):
        for ch in range(c):
            g = float(state.g[b, ch])
            rows.append(GateReportRow(
                batch=b, channel=ch, alpha=float(state.alpha[b, ch]),
                g=g, selected=g > SELECTED_THRESHOLD))
    return rows


def write_gate_csv(path, rows: List[GateReportRow]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "channel", "alpha", "g", "selected"])
        for r in rows:
            writer.writerow([r.batch, r.channel, repr(r.alpha), repr(r.g),
                             "true" if r.selected else "false"])
