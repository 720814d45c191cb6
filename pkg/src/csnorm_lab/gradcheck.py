"""Finite-difference verification of analytic gradients.

The harness perturbs individual parameter elements by +-h, rebuilds the
forward graph, and compares the central difference of the scalar loss
against the gradient produced by the reverse pass. An element passes when
|analytic - numeric| <= max(rtol * max(|analytic|, |numeric|), atol).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor import Tensor4, backward


@dataclass
class GradcheckEntry:
    name: str
    checked: int
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple
    passed: bool


@dataclass
class GradcheckReport:
    entries: List[GradcheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> Optional[GradcheckEntry]:
        if not self.entries:
            return None
        return max(self.entries, key=lambda e: e.max_rel_err)


def gradcheck(f: Callable[[], Tensor4], params: Sequence[Tensor4],
              h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-6,
              max_elements: int = 100, rng: Optional[np.random.Generator] = None,
              fault: Optional[str] = None) -> GradcheckReport:
    """Compare analytic gradients of f() against central finite differences.

    f must rebuild the graph from `params` on every call and be
    deterministic; a forward value that differs between two calls is an
    error. Up to `max_elements` elements are sampled per parameter.
    `fault="sign-flip"` negates the analytic gradients before comparison
    (fault-injection hook for testing the harness itself).
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    if rng is None:
        rng = np.random.default_rng(0)

    loss = f()
    loss2 = f()
    if not np.array_equal(loss.data, loss2.data):
        raise ValueError("gradcheck requires a deterministic function; "
                         "forward values differ between calls")
    for p in params:
        p.zero_grad()
    backward(loss)
    analytic = {id(p): (np.zeros(p.shape) if p.grad is None else p.grad.copy())
                for p in params}
    if fault == "sign-flip":
        analytic = {k: -v for k, v in analytic.items()}
    elif fault is not None:
        raise ValueError(f"unknown fault kind {fault!r}")

    report = GradcheckReport()
    for idx_p, p in enumerate(params):
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_elements:
            sample = np.arange(n)
        else:
            sample = rng.choice(n, size=max_elements, replace=False)
        a_flat = analytic[id(p)].reshape(-1)
        max_rel = 0.0
        max_abs = 0.0
        worst = (0,)
        ok = True
        for j in sample:
            orig = flat[j]
            flat[j] = orig + h
            up = f().item()
            flat[j] = orig - h
            down = f().item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * h)
            a = a_flat[j]
            abs_err = abs(a - numeric)
            scale = max(abs(a), abs(numeric))
            rel_err = abs_err / max(scale, atol)
            if abs_err > max(rtol * scale, atol):
                ok = False
            if rel_err > max_rel:
                max_rel = rel_err
                max_abs = abs_err
                worst = np.unravel_index(int(j), p.shape)
        name = p.name or f"param{idx_p}"
        report.entries.append(GradcheckEntry(
            name=name, checked=len(sample), max_rel_err=max_rel,
            max_abs_err=max_abs, worst_index=worst, passed=ok))
    return report
