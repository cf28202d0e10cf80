"""Circular uniform local binary patterns.

Bit ``n`` of a code (weight ``2**n``, ``n = 0 .. P-1``) compares the
neighbor at angle ``2*pi*n/P`` with the center.  Angle 0 points along +x
and angles increase counter-clockwise as seen on screen, i.e. towards
smaller row indices.  Off-grid neighbors are bilinearly interpolated.

A neighbor sets its bit when ``neighbor - center >= 0``.  Differences are
formed from integer pixel differences before interpolation, so adding a
constant to the plane leaves every code bit-identical, and differences
within ``SIGN_TOLERANCE`` of zero count as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED = {8: 1, 16: 2, 24: 3}
SIGN_TOLERANCE = 1e-6
# axis-aligned offsets come out of cos/sin as 1e-16-ish; snap them
_SNAP = 1e-9


def n_bins(P: int) -> int:
    """Histogram length of a u2 descriptor: ``P(P-1) + 3``."""
    return P * (P - 1) + 3


def transitions(patterns: np.ndarray, P: int) -> np.ndarray:
    """Number of circular 0/1 transitions in each ``P``-bit pattern."""
    patterns = np.asarray(patterns, dtype=np.uint64)
    mask = np.uint64((1 << P) - 1)
    rotated = ((patterns >> np.uint64(1)) | (patterns << np.uint64(P - 1))) & mask
    return np.bitwise_count(patterns ^ rotated).astype(np.int64)


@lru_cache(maxsize=None)
def build_u2_map(P: int) -> np.ndarray:
    """Lookup table from raw pattern to u2 bin.

    Uniform patterns (at most two circular transitions) get bins
    ``0 .. P(P-1)+1`` in ascending order of raw value; everything else
    lands in the last bin ``P(P-1)+2``.
    """
    if P not in SUPPORTED:
        raise ValueError(f"unsupported neighbor count P={P}; expected one of {sorted(SUPPORTED)}")
    patterns = np.arange(1 << P, dtype=np.uint64)
    uniform = transitions(patterns, P) <= 2
    table = np.full(1 << P, P * (P - 1) + 2, dtype=np.int16)
    table[uniform] = np.arange(int(uniform.sum()), dtype=np.int16)
    table.flags.writeable = False
    return table


@dataclass(frozen=True)
class LbpConfig:
    P: int
    R: int

    def __post_init__(self):
        if self.P not in SUPPORTED:
            raise ValueError(f"unsupported P={self.P}")
        if self.R < 1 or self.R > 3:
            raise ValueError(f"unsupported R={self.R}")

    @property
    def n_bins(self) -> int:
        return n_bins(self.P)

    @property
    def margin(self) -> int:
        return math.ceil(self.R)

    @property
    def u2_map(self) -> np.ndarray:
        return build_u2_map(self.P)


def neighbor_offsets(P: int, R: float) -> list[tuple[float, float]]:
    """``(dy, dx)`` offset of each neighbor, bit order."""
    offsets = []
    for n in range(P):
        theta = 2.0 * math.pi * n / P
        dx = R * math.cos(theta)
        dy = -R * math.sin(theta)
        if abs(dx - round(dx)) < _SNAP:
            dx = float(round(dx))
        if abs(dy - round(dy)) < _SNAP:
            dy = float(round(dy))
        offsets.append((dy, dx))
    return offsets


@dataclass(frozen=True)
class CodeMap:
    """Per-pixel u2 bins; ``-1`` marks pixels inside the border margin."""

    codes: np.ndarray
    margin: int
    n_bins: int

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.codes >= 0


def raw_patterns(plane: np.ndarray, P: int, R: float) -> np.ndarray:
    """Raw ``P``-bit patterns for the interior (margin-cropped) pixels."""
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValueError("expected a single-channel plane")
    m = math.ceil(R)
    h, w = plane.shape
    if h < 2 * m + 1 or w < 2 * m + 1:
        raise ValueError(f"plane {w}x{h} too small for radius {R}")
    src = plane.astype(np.int32)
    ih, iw = h - 2 * m, w - 2 * m
    center = src[m:m + ih, m:m + iw]

    def shifted(oy: int, ox: int) -> np.ndarray:
        return src[m + oy:m + oy + ih, m + ox:m + ox + iw] - center

    codes = np.zeros((ih, iw), dtype=np.uint64)
    for bit, (dy, dx) in enumerate(neighbor_offsets(P, R)):
        y0, x0 = math.floor(dy), math.floor(dx)
        fy, fx = dy - y0, dx - x0
        d00 = shifted(y0, x0)
        if fx == 0.0 and fy == 0.0:
            diff = d00.astype(np.float64)
        else:
            d01 = shifted(y0, x0 + 1) if fx else d00
            d10 = shifted(y0 + 1, x0) if fy else d00
            d11 = shifted(y0 + 1, x0 + 1) if (fx and fy) else (d01 if fx else d10)
            top = d00 + fx * (d01 - d00)
            bottom = d10 + fx * (d11 - d10)
            diff = top + fy * (bottom - top)
        codes |= (diff >= -SIGN_TOLERANCE).astype(np.uint64) << np.uint64(bit)
    return codes


def lbp_codes(plane: np.ndarray, cfg: LbpConfig) -> CodeMap:
    """Compute the u2 code of every pixel at least ``ceil(R)`` from the border."""
    patterns = raw_patterns(plane, cfg.P, cfg.R)
    m = cfg.margin
    h, w = np.asarray(plane).shape
    codes = np.full((h, w), -1, dtype=np.int16)
    codes[m:h - m, m:w - m] = cfg.u2_map[patterns.astype(np.intp)]
    return CodeMap(codes, m, cfg.n_bins)


def region_histogram(codes: CodeMap, region: tuple[int, int, int, int], B: int | None = None) -> np.ndarray:
    """L1-normalized histogram of the valid codes in ``region``.

    ``region`` is ``(top, left, bottom, right)`` with exclusive bottom/right.
    Returns an all-zero vector when the region holds no valid code.
    """
    if B is None:
        B = codes.n_bins
    top, left, bottom, right = region
    if not (0 <= top <= bottom <= codes.height and 0 <= left <= right <= codes.width):
        raise ValueError(f"region {region} outside {codes.width}x{codes.height} plane")
    block = codes.codes[top:bottom, left:right]
    block = block[block >= 0]
    hist = np.bincount(block.astype(np.intp), minlength=B).astype(np.float64)
    if hist.size > B:
        raise ValueError(f"codes exceed bin count {B}")
    total = hist.sum()
    if total > 0:
        hist /= total
    return hist
