"""Image loading, bilinear resizing and color-space conversion.

All images are 3-channel 8-bit rasters stored as ``(height, width, 3)``
uint8 arrays.  Conversions are exact-rounding: every output channel is the
nearest integer (halves rounded up) of the textbook formula evaluated on
the integer inputs, then clamped to ``[0, 255]``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage
from PIL import UnidentifiedImageError

NORMALIZED_SIZE = 128


class ImageError(ValueError):
    """Raised when an image cannot be loaded or is the wrong kind."""


class ColorSpace(str, enum.Enum):
    RGB = "RGB"
    HSV = "HSV"
    YCBCR = "YCbCr"

    @classmethod
    def parse(cls, name: str | "ColorSpace") -> "ColorSpace":
        if isinstance(name, ColorSpace):
            return name
        for member in cls:
            if member.value.lower() == str(name).lower():
                return member
        raise ValueError(f"unknown color space {name!r}; expected RGB, HSV or YCbCr")


@dataclass(frozen=True)
class Image:
    """An immutable 3-channel 8-bit raster tagged with its color space."""

    data: np.ndarray
    space: ColorSpace = ColorSpace.RGB

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ImageError(f"expected an (H, W, 3) array, got shape {data.shape}")
        if data.dtype != np.uint8:
            if np.issubdtype(data.dtype, np.integer) or np.issubdtype(data.dtype, np.floating):
                if data.size and (data.min() < 0 or data.max() > 255):
                    raise ImageError("intensities must lie in [0, 255]")
            data = data.astype(np.uint8)
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ImageError("empty image")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "space", ColorSpace.parse(self.space))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def plane(self, c: int) -> np.ndarray:
        return self.data[:, :, c]


def load_image(path: str | os.PathLike) -> Image:
    """Decode a PNG, BMP or binary PPM file into an RGB :class:`Image`.

    Grayscale, palette and alpha images are rejected rather than expanded.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageError(f"no such image file: {path}")
    try:
        with _PILImage.open(path) as im:
            if im.format not in ("PNG", "BMP", "PPM"):
                raise ImageError(f"{path}: unsupported format {im.format}")
            if im.mode != "RGB":
                raise ImageError(f"{path}: expected a 3-channel RGB source, got mode {im.mode}")
            im.load()
            data = np.array(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc
    return Image(data, ColorSpace.RGB)


def save_png(img: Image, path: str | os.PathLike) -> None:
    if img.space is not ColorSpace.RGB:
        raise ImageError("only RGB images are written")
    _PILImage.fromarray(np.asarray(img.data), mode="RGB").save(path, format="PNG")


def _round_clamp(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _sample_positions(n_in: int, n_out: int):
    # corner-aligned: output 0 -> input 0, output n_out-1 -> input n_in-1
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(np.intp), n_in - 1)
    frac = pos - lo
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, frac


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Resample every channel bilinearly to ``out_w`` x ``out_h``."""
    if out_w < 1 or out_h < 1:
        raise ImageError(f"target size must be positive, got {out_w}x{out_h}")
    src = np.asarray(img.data, dtype=np.float64)
    y0, y1, fy = _sample_positions(img.height, out_h)
    x0, x1, fx = _sample_positions(img.width, out_w)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = src[y0][:, x0] + fx * (src[y0][:, x1] - src[y0][:, x0])
    bottom = src[y1][:, x0] + fx * (src[y1][:, x1] - src[y1][:, x0])
    out = top + fy * (bottom - top)
    return Image(_round_clamp(out), img.space)


def normalize(img: Image, size: int = NORMALIZED_SIZE) -> Image:
    if img.width == size and img.height == size:
        return img
    return resize_bilinear(img, size, size)


def _require_rgb(img: Image) -> np.ndarray:
    if img.space is not ColorSpace.RGB:
        raise ImageError(f"conversion needs an RGB image, got {img.space.value}")
    return np.asarray(img.data, dtype=np.int64)


def to_hsv(img: Image) -> Image:
    """RGB -> HSV with all three channels scaled to ``[0, 255]``.

    Hue is ``degrees * 255 / 360``; achromatic pixels get hue 0.
    """
    rgb = _require_rgb(img)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    vmax = rgb.max(axis=-1)
    vmin = rgb.min(axis=-1)
    delta = vmax - vmin
    safe_delta = np.where(delta == 0, 1, delta)
    safe_max = np.where(vmax == 0, 1, vmax)

    # each hue branch is one integer numerator over one integer denominator
    # so the float division is correctly rounded before the half-up rounding
    den = 6 * safe_delta
    h_r = ((g - b) * 255) / den
    h_r = np.where(h_r < 0, h_r + 255, h_r)
    h_g = 85 + ((b - r) * 255) / den
    h_b = 170 + ((r - g) * 255) / den
    hue = np.where(vmax == r, h_r, np.where(vmax == g, h_g, h_b))
    hue = np.where(delta == 0, 0.0, hue)

    sat = np.where(vmax == 0, 0.0, (delta * 255) / safe_max)
    out = np.stack([hue, sat, vmax.astype(np.float64)], axis=-1)
    return Image(_round_clamp(out), ColorSpace.HSV)


def to_ycbcr(img: Image) -> Image:
    """RGB -> full-range BT.601 YCbCr (chroma offset 128)."""
    rgb = _require_rgb(img)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = (299 * r + 587 * g + 114 * b) / 1000
    cb = 128 + (-168736 * r - 331264 * g + 500000 * b) / 1_000_000
    cr = 128 + (500000 * r - 418688 * g - 81312 * b) / 1_000_000
    out = np.stack([y, cb, cr], axis=-1)
    return Image(_round_clamp(out), ColorSpace.YCBCR)


def convert(img: Image, space: ColorSpace | str) -> Image:
    space = ColorSpace.parse(space)
    if space is img.space:
        return img
    if space is ColorSpace.HSV:
        return to_hsv(img)
    if space is ColorSpace.YCBCR:
        return to_ycbcr(img)
    raise ImageError(f"cannot convert {img.space.value} back to RGB")


def prepare(img: Image, space: ColorSpace | str, size: int = NORMALIZED_SIZE) -> Image:
    """Resize to ``size`` x ``size`` then convert to ``space``."""
    return convert(normalize(img, size), space)
