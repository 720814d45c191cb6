"""Training objectives for the two alternating steps.

Step 1 (parameters outside the normalization layer, original inputs) uses
the pixel MSE alone. Step 2 (parameters inside, lightness-perturbed inputs)
adds a Fourier-amplitude MSE scaled by a balance factor delta, steering the
gate toward channels that carry lightness. Both "|.|_2" terms are realized
as means of squared differences.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .spectral import amplitude_l2
from .tensor import Tensor4


@dataclass
class LossBreakdown:
    pixel: float
    amplitude: float
    total: float
    delta: float
    node: Tensor4  # graph scalar; backprop target


def loss_step1(pred: Tensor4, gt: Tensor4) -> LossBreakdown:
    """Pixel MSE only."""
    node = T.mean_square(pred, gt)
    value = node.item()
    return LossBreakdown(pixel=value, amplitude=0.0, total=value, delta=0.0, node=node)


def loss_step2(pred: Tensor4, gt: Tensor4, delta: float) -> LossBreakdown:
    """Pixel MSE plus delta times the amplitude MSE."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    pixel = T.mean_square(pred, gt)
    amp = amplitude_l2(pred, gt)
    node = T.add(pixel, T.mul(amp, delta))
    return LossBreakdown(pixel=pixel.item(), amplitude=amp.item(),
                         total=node.item(), delta=delta, node=node)
