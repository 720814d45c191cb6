"""Desk-scale lab for channel-selective normalization.

Library layers, bottom up: a rank-4 autodiff engine (tensor, gradcheck),
the gated normalization layer (csnorm), Fourier amplitude tooling
(spectral), objectives and metrics (losses, metrics), synthetic data
(data), the toy backbone and training strategies (model, train,
checkpoint), scripted experiments (experiments), and the CLI (cli).
"""

from .csnorm import (CSNormLayer, GateState, csnorm_forward, gate_forward,
                     gate_function, inspect_gates, instance_norm, param_count)
from .data import (SceneSpec, ScenePair, condition_interp, condition_scale,
                   gen_scene_pairs, load_ppm, save_ppm)
from .gradcheck import GradcheckReport, gradcheck
from .losses import LossBreakdown, loss_step1, loss_step2
from .metrics import psnr, ssim
from .model import ParamPartition, ToyBackbone, TrainConfig
from .spectral import Spectrum, amp_interp, amplitude_l2, dft2d, idft2d, perturb_lightness
from .tensor import Tensor4, backward, conv2d, channel_stats
from .train import evaluate, train_alternating, train_baseline, train_mixed

__version__ = "0.1.0"

__all__ = [
    "CSNormLayer", "GateState", "csnorm_forward", "gate_forward", "gate_function",
    "inspect_gates", "instance_norm", "param_count",
    "SceneSpec", "ScenePair", "condition_interp", "condition_scale",
    "gen_scene_pairs", "load_ppm", "save_ppm",
    "GradcheckReport", "gradcheck",
    "LossBreakdown", "loss_step1", "loss_step2", "psnr", "ssim",
    "ParamPartition", "ToyBackbone", "TrainConfig",
    "Spectrum", "amp_interp", "amplitude_l2", "dft2d", "idft2d", "perturb_lightness",
    "Tensor4", "backward", "conv2d", "channel_stats",
    "evaluate", "train_alternating", "train_baseline", "train_mixed",
]
