"""Training strategies: partitioned alternating updates plus the controls.

The alternating loop interleaves two kinds of update:

  step 1  original degraded input, pixel loss, update parameters OUTSIDE
          the normalization layer only;
  step 2  amplitude-perturbed input (fresh batch, fresh lambda), pixel +
          amplitude loss, update parameters INSIDE only.

Each partition gets its own optimizer, so a step can only ever touch its
own side; the other side is bit-identical before and after. The baseline
and mixed strategies share one plain loop: all parameters, single pixel
loss, optionally feeding perturbed batches (mixed) -- with perturbation
probability 0 the mixed loop IS the baseline, stream for stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import ScenePair, condition_interp, condition_scale
from .losses import loss_step1, loss_step2
from .metrics import psnr, ssim
from .model import ParamPartition, ToyBackbone, TrainConfig
from .rng import stream
from .spectral import perturb_lightness
from .tensor import Tensor4, backward


class NanLossError(RuntimeError):
    """Training hit a non-finite loss; aborted with diagnostics."""


@dataclass
class LogRow:
    epoch: int
    step_kind: int
    loss_pixel: float
    loss_amp: float
    holdout_psnr: Optional[float] = None


def write_log_csv(path, rows: Sequence[LogRow]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step_kind", "loss_pixel", "loss_amp", "holdout_psnr"])
        for r in rows:
            writer.writerow([r.epoch, r.step_kind, repr(r.loss_pixel), repr(r.loss_amp),
                             "" if r.holdout_psnr is None else repr(r.holdout_psnr)])


class Sgd:
    def __init__(self, params: Dict[str, Tensor4], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.lr * p.grad

    def zero(self):
        for p in self.params.values():
            p.zero_grad()


class Adam:
    def __init__(self, params: Dict[str, Tensor4], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(p.shape) for k, p in params.items()}
        self.v = {k: np.zeros(p.shape) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * (g * g)
            p.data -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)

    def zero(self):
        for p in self.params.values():
            p.zero_grad()


def make_optimizer(kind: str, params: Dict[str, Tensor4], lr: float):
    if kind == "sgd":
        return Sgd(params, lr)
    if kind == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def _stack(pairs: Sequence[ScenePair], idx: np.ndarray):
    degraded = Tensor4(np.concatenate([pairs[i].degraded.data for i in idx]))
    target = Tensor4(np.concatenate([pairs[i].target.data for i in idx]))
    return degraded, target


def _draw_batch(pairs, cfg: TrainConfig, epoch: int, step: int, kind: str):
    rng = stream(cfg.seed, "batch", kind, epoch, step)
    idx = rng.integers(0, len(pairs), size=min(cfg.batch_size, len(pairs)))
    return _stack(pairs, idx)


def _check_finite(value: float, where: str):
    if not np.isfinite(value):
        raise NanLossError(f"non-finite loss {value} at {where}")


def holdout_psnr(model: ToyBackbone, pairs: Sequence[ScenePair]) -> float:
    degraded, target = _stack(pairs, np.arange(len(pairs)))
    return psnr(model.predict(degraded), target.data)


def _perturbed_batch(degraded: Tensor4, target: Tensor4, cfg: TrainConfig,
                     epoch: int, step: int, perturbation: str) -> Tensor4:
    if perturbation == "amplitude":
        lam = float(stream(cfg.seed, "lambda", epoch, step).uniform(cfg.lambda_lo, cfg.lambda_hi))
        return perturb_lightness(degraded, target, lam)
    if perturbation == "linear":
        return condition_interp(degraded, target, 0.5)
    raise ValueError(f"unknown perturbation {perturbation!r}")


def train_alternating(model: ToyBackbone, pairs: Sequence[ScenePair], cfg: TrainConfig,
                      holdout: Optional[Sequence[ScenePair]] = None,
                      perturbation: str = "amplitude") -> List[LogRow]:
    """Alternating strategy; freezes one partition per step by construction."""
    if model.csnorm is None:
        raise ValueError("alternating training needs the normalization slot populated")
    if not pairs:
        raise ValueError("empty training set")
    named = model.named_params()
    part = model.partition()
    opt_out = make_optimizer(cfg.optimizer, {k: named[k] for k in part.outside}, cfg.lr_out)
    opt_in = make_optimizer(cfg.optimizer, {k: named[k] for k in part.inside}, cfg.lr_in)

    rows: List[LogRow] = []
    for epoch in range(cfg.epochs):
        for step in range(cfg.steps_per_epoch):
            degraded, target = _draw_batch(pairs, cfg, epoch, step, "step1")
            loss = loss_step1(model.forward(degraded), target)
            _check_finite(loss.total, f"epoch {epoch} step1 {step}")
            opt_out.zero()
            opt_in.zero()
            backward(loss.node)
            opt_out.step()
            rows.append(LogRow(epoch, 1, loss.pixel, loss.amplitude))

            for sub in range(cfg.step2_per_step1):
                degraded, target = _draw_batch(pairs, cfg, epoch,
                                               step * cfg.step2_per_step1 + sub, "step2")
                perturbed = _perturbed_batch(degraded, target, cfg, epoch,
                                             step * cfg.step2_per_step1 + sub, perturbation)
                loss = loss_step2(model.forward(perturbed), target, cfg.delta)
                _check_finite(loss.total, f"epoch {epoch} step2 {step}.{sub}")
                opt_out.zero()
                opt_in.zero()
                backward(loss.node)
                opt_in.step()
                rows.append(LogRow(epoch, 2, loss.pixel, loss.amplitude))
        if holdout:
            rows[-1].holdout_psnr = holdout_psnr(model, holdout)
    return rows


def _train_plain(model: ToyBackbone, pairs: Sequence[ScenePair], cfg: TrainConfig,
                 holdout: Optional[Sequence[ScenePair]], perturb_prob: float,
                 perturbation: str) -> List[LogRow]:
    """Single-loss loop over all parameters; used by baseline and mixed modes."""
    if not pairs:
        raise ValueError("empty training set")
    opt = make_optimizer(cfg.optimizer, model.named_params(), cfg.lr_out)

    rows: List[LogRow] = []
    for epoch in range(cfg.epochs):
        for step in range(cfg.steps_per_epoch):
            degraded, target = _draw_batch(pairs, cfg, epoch, step, "plain")
            kind = 1
            batch = degraded
            if perturb_prob > 0 and float(stream(cfg.seed, "mix", epoch, step).random()) < perturb_prob:
                batch = _perturbed_batch(degraded, target, cfg, epoch, step, perturbation)
                kind = 2
            loss = loss_step1(model.forward(batch), target)
            _check_finite(loss.total, f"epoch {epoch} plain {step}")
            opt.zero()
            backward(loss.node)
            opt.step()
            rows.append(LogRow(epoch, kind, loss.pixel, loss.amplitude))
        if holdout:
            rows[-1].holdout_psnr = holdout_psnr(model, holdout)
    return rows


def train_baseline(model: ToyBackbone, pairs: Sequence[ScenePair], cfg: TrainConfig,
                   holdout: Optional[Sequence[ScenePair]] = None) -> List[LogRow]:
    """Pixel-loss training of every parameter on original inputs.

    Runs steps_per_epoch updates per epoch, matching the alternating
    strategy's step-1 count; step 2 there is extra work on the other
    partition. A mixed-mode comparison wanting equal batch totals instead
    sets steps_per_epoch accordingly in its own config.
    """
    return _train_plain(model, pairs, cfg, holdout, perturb_prob=0.0, perturbation="amplitude")


def train_mixed(model: ToyBackbone, pairs: Sequence[ScenePair], cfg: TrainConfig,
                holdout: Optional[Sequence[ScenePair]] = None,
                perturb_prob: float = 0.5, perturbation: str = "amplitude") -> List[LogRow]:
    """Ablation control: original/perturbed data mixed, all parameters updated."""
    if model.csnorm is None:
        raise ValueError("mixed training expects the normalization slot populated")
    return _train_plain(model, pairs, cfg, holdout, perturb_prob, perturbation)


# --- evaluation over lightness conditions ------------------------------------

@dataclass
class MetricRow:
    condition: str
    psnr_db: float
    ssim: float


def evaluate(model: ToyBackbone, pairs: Sequence[ScenePair], conditions: Sequence[str],
             cross: Optional[Dict[str, Sequence[ScenePair]]] = None) -> List[MetricRow]:
    """Mean PSNR/SSIM per condition plus an `average` row across them.

    Tokens: original | interp | scale | cross:<name> (resolved in `cross`).
    """
    cross = cross or {}
    rows: List[MetricRow] = []
    for tag in conditions:
        if tag == "original":
            eval_pairs = pairs
            inputs, targets = _stack(eval_pairs, np.arange(len(eval_pairs)))
        elif tag == "interp":
            inputs, targets = _stack(pairs, np.arange(len(pairs)))
            inputs = condition_interp(inputs, targets, 0.5)
        elif tag == "scale":
            inputs, targets = _stack(pairs, np.arange(len(pairs)))
            inputs = condition_scale(inputs)
        elif tag.startswith("cross:"):
            name = tag.split(":", 1)[1]
            if name not in cross:
                raise ValueError(f"no cross dataset registered for {tag!r}")
            cpairs = cross[name]
            inputs, targets = _stack(cpairs, np.arange(len(cpairs)))
        else:
            raise ValueError(f"unknown condition tag {tag!r}")
        pred = model.predict(inputs)
        rows.append(MetricRow(tag, psnr(pred, targets.data), ssim(pred, targets.data)))
    if rows:
        rows.append(MetricRow("average",
                              float(np.mean([r.psnr_db for r in rows])),
                              float(np.mean([r.ssim for r in rows]))))
    return rows


def write_metric_csv(path_or_handle, rows: Sequence[MetricRow]):
    def _write(fh):
        writer = csv.writer(fh)
        writer.writerow(["condition", "psnr_db", "ssim"])
        for r in rows:
            writer.writerow([r.condition, repr(r.psnr_db), repr(r.ssim)])

    if hasattr(path_or_handle, "write"):
        _write(path_or_handle)
    else:
        with open(path_or_handle, "w", newline="") as fh:
            _write(fh)
