"""Synthetic lightness-adaptation scenes, test-condition transforms, image I/O.

Targets are procedural compositions of rectangles, linear gradients, and 2-D
sinusoids with per-image random contrast; the degraded counterpart applies a
gamma/gain darkening law plus Gaussian noise. Two preset darkening laws act
as separate "domains" so a cross-domain generalization protocol needs no
external data. Everything is a pure function of the spec, so one spec always
hashes to the same dataset.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields, replace
from typing import Dict, List

import numpy as np

from .rng import stream
from .tensor import Tensor4

MAX_IMAGE_SIZE = 64

DOMAIN_PRESETS = {
    "A": {"gain": 0.4, "gamma_d": 2.0},
    "B": {"gain": 0.25, "gamma_d": 2.6},
}


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    count: int
    height: int = 24
    width: int = 24
    n_rects: int = 3
    n_gradients: int = 1
    n_sinusoids: int = 2
    contrast_lo: float = 0.6
    contrast_hi: float = 1.6
    gain: float = 0.4
    gamma_d: float = 2.0
    noise_sigma: float = 0.01

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not (1 <= self.height <= MAX_IMAGE_SIZE and 1 <= self.width <= MAX_IMAGE_SIZE):
            raise ValueError(f"image size must be within 1..{MAX_IMAGE_SIZE}")

    @classmethod
    def for_domain(cls, domain: str, **kwargs) -> "SceneSpec":
        if domain not in DOMAIN_PRESETS:
            raise ValueError(f"unknown domain {domain!r}; choose from {sorted(DOMAIN_PRESETS)}")
        return cls(**{**DOMAIN_PRESETS[domain], **kwargs})


@dataclass
class ScenePair:
    degraded: Tensor4
    target: Tensor4
    condition_tag: str = "original"

    def __post_init__(self):
        if self.degraded.shape != self.target.shape:
            raise ValueError("degraded/target shapes differ")


def _compose_target(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    h, w = spec.height, spec.width
    yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    img = np.full((3, h, w), 0.5)

    for _ in range(spec.n_gradients):
        angle = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(angle) * xx + np.sin(angle) * yy
        amp = rng.uniform(0.15, 0.4)
        weights = rng.uniform(0.5, 1.0, size=3)
        img += amp * weights[:, None, None] * ramp

    for _ in range(spec.n_sinusoids):
        freq = rng.uniform(0.5, 3.0)
        angle = rng.uniform(0, 2 * np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
        amp = rng.uniform(0.05, 0.2)
        weights = rng.uniform(0.3, 1.0, size=3)
        img += amp * weights[:, None, None] * wave

    for _ in range(spec.n_rects):
        rh = rng.integers(max(2, h // 8), max(3, h // 2))
        rw = rng.integers(max(2, w // 8), max(3, w // 2))
        r0 = rng.integers(0, h - rh + 1)
        c0 = rng.integers(0, w - rw + 1)
        color = rng.uniform(0.0, 1.0, size=3)
        alpha = rng.uniform(0.4, 1.0)
        patch = img[:, r0:r0 + rh, c0:c0 + rw]
        img[:, r0:r0 + rh, c0:c0 + rw] = (1 - alpha) * patch + alpha * color[:, None, None]

    contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi)
    img = 0.5 + contrast * (img - 0.5)
    return np.clip(img, 0.0, 1.0)


def degrade(target: np.ndarray, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """gain * target^gamma_d + Gaussian noise, clamped to [0, 1]."""
    dark = spec.gain * np.power(target, spec.gamma_d)
    if spec.noise_sigma > 0:
        dark = dark + rng.normal(0.0, spec.noise_sigma, size=dark.shape)
    return np.clip(dark, 0.0, 1.0)


def gen_scene_pairs(spec: SceneSpec) -> List[ScenePair]:
    """Deterministic list of (degraded, target) pairs; per-item RNG streams."""
    pairs = []
    for i in range(spec.count):
        rng = stream(spec.seed, "scene", i)
        target = _compose_target(rng, spec)
        degraded = degrade(target, spec, rng)
        pairs.append(ScenePair(Tensor4(degraded[None]), Tensor4(target[None]), "original"))
    return pairs


# --- synthetic test-condition transforms ------------------------------------

def condition_interp(degraded: Tensor4, target: Tensor4, w: float = 0.5) -> Tensor4:
    """Pixel blend w*degraded + (1-w)*target, clamped."""
    if degraded.shape != target.shape:
        raise ValueError(f"interp shapes differ: {degraded.shape} vs {target.shape}")
    return Tensor4(np.clip(w * degraded.data + (1.0 - w) * target.data, 0.0, 1.0))


def condition_scale(x: Tensor4, lam: float = 1.2, eta: float = 1.1) -> Tensor4:
    """Brightness manipulation lam * x^eta, clamped."""
    if lam <= 0 or eta <= 0:
        raise ValueError("Lambda and eta must be positive")
    if np.any(x.data < 0):
        raise ValueError("condition_scale requires non-negative pixel values")
    return Tensor4(np.clip(lam * np.power(x.data, eta), 0.0, 1.0))


# --- PPM / PGM 8-bit image files --------------------------------------------

def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_ppm(path, img) -> None:
    arr = img.data if isinstance(img, Tensor4) else np.asarray(img, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError("save_ppm takes a single image")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"save_ppm expects 3 channels, got shape {arr.shape}")
    q = _quantize(arr)
    h, w = q.shape[1], q.shape[2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.transpose(1, 2, 0).tobytes())


def save_pgm(path, channel) -> None:
    arr = np.asarray(channel, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"save_pgm expects a 2-D channel, got shape {arr.shape}")
    q = _quantize(arr)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def _read_header(data: bytes, path) -> tuple:
    """Parse magic, width, height, maxval; returns (magic, w, h, offset)."""
    tokens = []
    i = 2  # past the 2-byte magic
    magic = data[:2]
    while len(tokens) < 3:
        if i >= len(data):
            raise ValueError(f"{path}: truncated header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if i >= len(data) or not data[i:i + 1].isspace():
        raise ValueError(f"{path}: malformed header")
    i += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric header field") from exc
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (only 255)")
    if w < 1 or h < 1:
        raise ValueError(f"{path}: invalid dimensions {w}x{h}")
    return magic, w, h, i


def load_ppm(path) -> Tensor4:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {data[:2]!r})")
    _, w, h, offset = _read_header(data, path)
    payload = data[offset:offset + 3 * w * h]
    if len(payload) != 3 * w * h:
        raise ValueError(f"{path}: truncated pixel payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return Tensor4(pixels.transpose(2, 0, 1)[None].astype(np.float64) / 255.0)


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    _, w, h, offset = _read_header(data, path)
    payload = data[offset:offset + w * h]
    if len(payload) != w * h:
        raise ValueError(f"{path}: truncated pixel payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


# --- flat key=value manifests and dataset directories ------------------------

def write_manifest(path, entries: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> Dict[str, str]:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed manifest line {line!r}")
            key, value = line.split("=", 1)
            entries[key] = value
    return entries


def write_dataset(dirpath, spec: SceneSpec, pairs: List[ScenePair]) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for i, pair in enumerate(pairs):
        save_ppm(os.path.join(dirpath, f"degraded_{i:04d}.ppm"), pair.degraded)
        save_ppm(os.path.join(dirpath, f"target_{i:04d}.ppm"), pair.target)
    entries = {f.name: getattr(spec, f.name) for f in fields(spec)}
    write_manifest(os.path.join(dirpath, "spec.manifest"), entries)


def load_dataset(dirpath) -> tuple:
    """Read a dataset directory back into (SceneSpec, pairs)."""
    manifest = read_manifest(os.path.join(dirpath, "spec.manifest"))
    kwargs = {}
    for f in fields(SceneSpec):
        raw = manifest[f.name]
        kwargs[f.name] = int(raw) if f.type == "int" else float(raw)
    spec = SceneSpec(**kwargs)
    pairs = []
    for i in range(spec.count):
        degraded = load_ppm(os.path.join(dirpath, f"degraded_{i:04d}.ppm"))
        target = load_ppm(os.path.join(dirpath, f"target_{i:04d}.ppm"))
        pairs.append(ScenePair(degraded, target, "original"))
    return spec, pairs


def dataset_digest(dirpath) -> str:
    """SHA-256 over every file in the directory, sorted by name."""
    digest = hashlib.sha256()
    for name in sorted(os.listdir(dirpath)):
        digest.update(name.encode("utf-8"))
        with open(os.path.join(dirpath, name), "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def generate_dataset(dirpath, spec: SceneSpec) -> List[ScenePair]:
    pairs = gen_scene_pairs(spec)
    write_dataset(dirpath, spec, pairs)
    return pairs
