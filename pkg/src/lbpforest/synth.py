"""Synthetic genuine/recaptured image pairs for desk-scale benchmarking.

Genuine images are smoothed colored noise over a per-subject base color
with soft shading.  Spoof images are drawn from the same process and then
"recaptured": mild blur, 8x8 DCT quantization (blocking) and an additive
sinusoidal moire pattern.  Every image then gets a random global exposure
(gain and offset), which raw-pixel features must cope with.  Bump ``GENERATOR_VERSION`` whenever the output
changes.
"""

from __future__ import annotations

import csv
import os

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from ._rng import generator
from .imagio import Image, save_png

GENERATOR_VERSION = 1
IMAGES_PER_SUBJECT = 5
# exposure varies per capture for both classes
GAIN_SPREAD = 0.2
OFFSET_SPREAD = 30.0

# JPEG luminance table, used for every channel
_JPEG_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _subject_palette(seed: int, subject: int) -> np.ndarray:
    rng = generator(seed, subject, 0xC0)
    return rng.uniform(70, 190, size=3)


def genuine_signal(rng: np.random.Generator, base: np.ndarray, size: int) -> np.ndarray:
    """Float RGB image: band-limited color noise, shading and base color."""
    fine = gaussian_filter(rng.normal(0, 1, (size, size, 3)), sigma=(1.2, 1.2, 0))
    coarse = gaussian_filter(rng.normal(0, 1, (size, size, 3)), sigma=(6, 6, 0))
    fine *= 22 / fine.std()
    coarse *= 18 / coarse.std()
    yy, xx = np.mgrid[0:size, 0:size] / size
    angle = rng.uniform(0, 2 * np.pi)
    shading = 25 * (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5))
    return base[None, None, :] + fine + coarse + shading[..., None]


def dct_block_quantize(img: np.ndarray, quality_scale: float) -> np.ndarray:
    """Quantize every 8x8 block of every channel in the DCT domain."""
    h, w, _ = img.shape
    q = _JPEG_Q * quality_scale
    out = np.empty_like(img)
    for c in range(3):
        plane = img[:, :, c] - 128.0
        blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
        coeff = dctn(blocks, axes=(2, 3), norm="ortho")
        coeff = np.round(coeff / q) * q
        rec = idctn(coeff, axes=(2, 3), norm="ortho")
        out[:, :, c] = rec.transpose(0, 2, 1, 3).reshape(h, w) + 128.0
    return out


def recapture(rng: np.random.Generator, img: np.ndarray) -> np.ndarray:
    size = img.shape[0]
    out = gaussian_filter(img, sigma=(rng.uniform(0.9, 1.3), rng.uniform(0.9, 1.3), 0))
    out = dct_block_quantize(out, rng.uniform(1.5, 2.5))
    yy, xx = np.mgrid[0:size, 0:size]
    period = rng.uniform(3.0, 6.0)
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / period + phase)
    amplitude = rng.uniform(6.0, 10.0) * rng.uniform(0.8, 1.2, size=3)
    return out + wave[..., None] * amplitude[None, None, :]


def illuminate(rng: np.random.Generator, img: np.ndarray) -> np.ndarray:
    """Per-capture exposure: global gain and offset around mid-gray."""
    gain = rng.uniform(1 - GAIN_SPREAD, 1 + GAIN_SPREAD)
    offset = rng.uniform(-OFFSET_SPREAD, OFFSET_SPREAD)
    return (img - 128.0) * gain + 128.0 + offset


def make_image(seed: int, subject: int, index: int, spoof: bool, size: int = 128) -> Image:
    rng = generator(seed, subject, index, int(spoof))
    signal = genuine_signal(rng, _subject_palette(seed, subject), size)
    if spoof:
        signal = recapture(rng, signal)
    signal = illuminate(rng, signal)
    return Image(np.clip(np.floor(signal + 0.5), 0, 255).astype(np.uint8))


def generate(out_dir, n_per_class: int = 200, seed: int = 7, size: int = 128) -> str:
    """Write PNGs and ``manifest.csv`` under ``out_dir``; return the manifest path.

    Subjects own ``IMAGES_PER_SUBJECT`` images of each class.  The first half
    of the subjects get ``fold = 0`` (train) and the rest ``fold = 1`` (test).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if size % 8:
        raise ValueError("size must be a multiple of 8")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    n_subjects = -(-n_per_class // IMAGES_PER_SUBJECT)
    rows = []
    for label in ("genuine", "spoof"):
        for i in range(n_per_class):
            subject, index = divmod(i, IMAGES_PER_SUBJECT)
            name = f"images/{label}_s{subject:03d}_{index}.png"
            save_png(make_image(seed, subject, index, label == "spoof", size), os.path.join(out_dir, name))
            fold = 0 if subject < n_subjects / 2 else 1
            rows.append((name, label, f"s{subject:03d}", f"s{subject:03d}-{label}", fold))
    path = os.path.join(out_dir, "manifest.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "subject", "group", "fold"])
        writer.writerows(rows)
    return path
