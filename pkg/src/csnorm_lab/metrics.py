"""Image quality metrics: PSNR and single-scale SSIM.

Metrics run on plain arrays (predictions are clamped before scoring);
they are evaluation-only and carry no gradients.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor4

PSNR_CAP_DB = 99.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor4) else np.asarray(x, dtype=np.float64)
    return arr


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 99 dB for (near-)identical inputs."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    aa, bb = _as_array(a), _as_array(b)
    if aa.shape != bb.shape:
        raise ValueError(f"psnr shapes differ: {aa.shape} vs {bb.shape}")
    mse = float(np.mean((aa - bb) ** 2))
    if mse < 1e-12:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = _SSIM_WINDOW, sigma: float = _SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    k = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("hwij,ij->hw", view, window)


def ssim(a, b) -> float:
    """Gaussian-windowed SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03, range 1.0).

    Windows are evaluated at valid positions only and the map is averaged
    over positions, channels, and instances. Images must be at least the
    window size.
    """
    aa, bb = _as_array(a), _as_array(b)
    if aa.shape != bb.shape:
        raise ValueError(f"ssim shapes differ: {aa.shape} vs {bb.shape}")
    if aa.ndim == 3:
        aa, bb = aa[None], bb[None]
    if aa.ndim != 4:
        raise ValueError(f"ssim expects (N, C, H, W) data, got shape {aa.shape}")
    h, w = aa.shape[2], aa.shape[3]
    if h < _SSIM_WINDOW or w < _SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")

    window = _gaussian_window()
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    values = []
    for n in range(aa.shape[0]):
        for c in range(aa.shape[1]):
            x, y = aa[n, c], bb[n, c]
            mu_x = _filter_valid(x, window)
            mu_y = _filter_valid(y, window)
            var_x = _filter_valid(x * x, window) - mu_x * mu_x
            var_y = _filter_valid(y * y, window) - mu_y * mu_y
            cov = _filter_valid(x * y, window) - mu_x * mu_y
            num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
            den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
            values.append(np.mean(num / den))
    return float(np.mean(values))
