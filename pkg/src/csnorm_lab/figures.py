"""Matplotlib renderings of experiment reports (PNG files next to the CSVs)."""

from __future__ import annotations

from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": "csnorm-lab"}  # pinned so reruns produce identical bytes


def save_condition_bars(path, arm_values: Dict[str, Dict[str, float]],
                        conditions: Sequence[str], title: str):
    """Grouped bar chart: one bar group per condition, one bar per arm."""
    arms = list(arm_values)
    x = np.arange(len(conditions))
    width = 0.8 / max(len(arms), 1)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i, arm in enumerate(arms):
        vals = [arm_values[arm].get(c, np.nan) for c in conditions]
        ax.bar(x + (i - (len(arms) - 1) / 2) * width, vals, width, label=arm)
    ax.set_xticks(x)
    ax.set_xticklabels(conditions)
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_paired_psnr(path, per_image: Dict[str, List[float]], title: str):
    """Per-image PSNR lines for two arms over the holdout set."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for arm, values in per_image.items():
        ax.plot(range(len(values)), values, marker="o", label=arm)
    ax.set_xlabel("holdout image")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_gate_histogram(path, gate_means: np.ndarray, title: str):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(gate_means, bins=np.linspace(0, 1, 21), edgecolor="black")
    ax.axvspan(0.1, 0.9, color="orange", alpha=0.15, label="undecided band")
    ax.set_xlabel("per-channel mean gate value")
    ax.set_ylabel("channels")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_gate_bars(path, gates: np.ndarray, title: str):
    """Per-channel gate values for one input (bar per channel)."""
    fig, ax = plt.subplots(figsize=(7, 3.0))
    ax.bar(np.arange(len(gates)), gates)
    ax.axhline(0.5, color="red", linestyle="--", linewidth=1, label="selected threshold")
    ax.set_xlabel("channel")
    ax.set_ylabel("gate value")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
