"""Per-channel 2-D Fourier analysis and the amplitude-domain lightness perturbation.

The perturbation linearly blends the Fourier amplitudes of a degraded image
and its normal-light counterpart while keeping the degraded image's phase,
then reconstructs by inverse transform. Because phase carries structure and
amplitude carries global lightness, the result shifts brightness without
touching edges.

Transforms use the standard unnormalized forward DFT with the 1/(H*W)
factor on the inverse (numpy's fft convention); tests check it against a
naive double-loop oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor4


@dataclass
class Spectrum:
    """Complex field per channel, stored as separate re/im (C, H, W) arrays."""
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape or self.re.ndim != 3:
            raise ValueError("Spectrum requires matching rank-3 re/im fields")

    @property
    def shape(self):
        return self.re.shape

    def complex_view(self) -> np.ndarray:
        return self.re + 1j * self.im

    def amplitude(self) -> np.ndarray:
        return np.hypot(self.re, self.im)

    def phase(self) -> np.ndarray:
        return np.arctan2(self.im, self.re)

    def copy(self) -> "Spectrum":
        return Spectrum(self.re.copy(), self.im.copy())


def _image_channels(image) -> np.ndarray:
    """Accept a single-instance Tensor4 or a (C, H, W) array."""
    arr = image.data if isinstance(image, Tensor4) else np.asarray(image, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError(f"expected a single instance, got batch of {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W) image data, got shape {arr.shape}")
    return arr


def dft2d(image) -> Spectrum:
    """Forward 2-D DFT of each channel of a single image."""
    arr = _image_channels(image)
    if arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError("dft2d needs at least one spatial sample")
    f = np.fft.fft2(arr, axes=(1, 2))
    return Spectrum(np.ascontiguousarray(f.real), np.ascontiguousarray(f.imag))


def idft2d(spec: Spectrum) -> np.ndarray:
    """Inverse transform back to a real (C, H, W) image; imaginary residue dropped."""
    return np.real(np.fft.ifft2(spec.complex_view(), axes=(1, 2)))


def amp_interp(low: Spectrum, norm: Spectrum, lam: float) -> Spectrum:
    """Blend amplitudes: A_out = lam*A(low) + (1-lam)*A(norm); phase stays P(low)."""
    if low.shape != norm.shape:
        raise ValueError(f"spectrum shapes differ: {low.shape} vs {norm.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:
        # exact endpoint: the blend reduces to A(low) with P(low), i.e. `low` itself
        return low.copy()
    a_mix = lam * low.amplitude() + (1.0 - lam) * norm.amplitude()
    phase = low.phase()
    return Spectrum(a_mix * np.cos(phase), a_mix * np.sin(phase))


def perturb_lightness(low_img: Tensor4, norm_img: Tensor4, lam: float,
                      clamp: bool = True) -> Tensor4:
    """Amplitude-blended reconstruction of a batch, clamped to [0, 1].

    Each instance is perturbed independently; one lambda applies to the
    whole batch. `clamp=False` returns the raw inverse transform (used by
    phase-preservation checks).
    """
    if low_img.shape != norm_img.shape:
        raise ValueError(f"image shapes differ: {low_img.shape} vs {norm_img.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    out = np.empty_like(low_img.data)
    for n in range(low_img.shape[0]):
        mixed = amp_interp(dft2d(low_img.data[n]), dft2d(norm_img.data[n]), lam)
        out[n] = idft2d(mixed)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return Tensor4(out)


def fourier_amplitude(x: Tensor4) -> Tensor4:
    """Per-channel DFT amplitude of a batch, differentiable w.r.t. x.

    For bins with zero amplitude the (sub)gradient is taken as 0, matching
    the convention for |.| at the origin.
    """
    _, _, h, w = x.shape
    f = np.fft.fft2(x.data, axes=(2, 3))
    amp = np.abs(f)
    out = Tensor4._op(amp, (x,), None)

    def backward():
        ratio = np.where(amp > 0.0, out.grad / amp, 0.0)
        gx = np.real(np.fft.ifft2(ratio * f, axes=(2, 3))) * (h * w)
        x.accumulate_grad(gx)

    out._backward = backward if out.needs_grad else None
    return out


def amplitude_l2(a: Tensor4, b: Tensor4) -> Tensor4:
    """Mean squared amplitude difference over all bins, as a graph scalar."""
    if a.shape != b.shape:
        raise ValueError(f"amplitude_l2 shapes differ: {a.shape} vs {b.shape}")
    return T.mean_square(fourier_amplitude(a), fourier_amplitude(b))
