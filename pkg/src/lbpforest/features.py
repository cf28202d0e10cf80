"""Multi-scale color LBP representations and the grained-scanning baseline.

An LBP representation of a 128x128 image is the concatenation, over the
7x7 grid of 32-pixel windows at stride 16, of one u2 histogram per
channel.  Layout is patch-major (row-major patch order), then channel,
then bin.  Three scales use (P, R) = (8, 1), (16, 2) and (24, 3).
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass

import numpy as np

from .forest import DegenerateDataError, Forest, train_completely_random_forest, train_random_forest
from ._rng import derive_seed, generator
from .imagio import NORMALIZED_SIZE, ColorSpace, Image
from .lbp import LbpConfig, lbp_codes

WINDOW = 32
STRIDE = 16


class Scale(enum.IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3

    @property
    def config(self) -> LbpConfig:
        return SCALE_CONFIGS[self]


SCALE_CONFIGS = {Scale.S1: LbpConfig(8, 1), Scale.S2: LbpConfig(16, 2), Scale.S3: LbpConfig(24, 3)}


@dataclass(frozen=True)
class PatchGrid:
    window: int = WINDOW
    stride: int = STRIDE
    size: int = NORMALIZED_SIZE

    @property
    def rows(self) -> int:
        return (self.size - self.window) // self.stride + 1

    cols = rows

    @property
    def n_patches(self) -> int:
        return self.rows * self.rows

    def regions(self) -> list[tuple[int, int, int, int]]:
        """``(top, left, bottom, right)`` of every window, row-major from the top-left."""
        out = []
        for r in range(self.rows):
            for c in range(self.rows):
                top, left = r * self.stride, c * self.stride
                out.append((top, left, top + self.window, left + self.window))
        return out


LBP_GRID = PatchGrid()


def scale_length(scale: Scale | int, grid: PatchGrid = LBP_GRID) -> int:
    return grid.n_patches * 3 * Scale(scale).config.n_bins


def _patch_histograms(codes: np.ndarray, B: int, grid: PatchGrid) -> np.ndarray:
    out = np.zeros((grid.n_patches, B), dtype=np.float64)
    for p, (top, left, bottom, right) in enumerate(grid.regions()):
        block = codes[top:bottom, left:right]
        block = block[block >= 0]
        if block.size:
            out[p] = np.bincount(block, minlength=B) / block.size
    return out


def extract_scale(img: Image, scale: Scale | int, grid: PatchGrid = LBP_GRID) -> np.ndarray:
    """One scale's representation as a float32 vector of length ``49 * 3 * B``."""
    if img.width != grid.size or img.height != grid.size:
        raise ValueError(f"expected a {grid.size}x{grid.size} image, got {img.width}x{img.height}")
    cfg = Scale(scale).config
    per_channel = []
    for c in range(3):
        codes = lbp_codes(img.plane(c), cfg).codes
        per_channel.append(_patch_histograms(codes, cfg.n_bins, grid))
    # (patch, channel, bin)
    stacked = np.stack(per_channel, axis=1)
    return stacked.reshape(-1).astype(np.float32)


def extract_all_scales(img: Image) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(extract_scale(img, s) for s in Scale)


# ---------------------------------------------------------------------------
# grained scanning

GSM_WINDOWS = ((16, 8), (32, 16), (64, 32))


def gsm_patch_count(window: int, stride: int, size: int = NORMALIZED_SIZE) -> int:
    return PatchGrid(window, stride, size).n_patches


def gsm_length(window: int, stride: int, size: int = NORMALIZED_SIZE) -> int:
    return gsm_patch_count(window, stride, size) * 2 * 2


def extract_patches(img: Image, window: int, stride: int) -> np.ndarray:
    """Raw pixels of every window, row-major scan, flattened ``(y, x, channel)``."""
    grid = PatchGrid(window, stride, img.width)
    if img.width != img.height:
        raise ValueError("grained scanning expects square images")
    data = np.asarray(img.data)
    return np.stack([data[t:b, l:r].reshape(-1) for t, l, b, r in grid.regions()]).astype(np.float32)


@dataclass
class GsmForests:
    window: int
    stride: int
    rf: Forest
    crf: Forest

    @property
    def n_features(self) -> int:
        return self.window * self.window * 3


def gsm_train(patches, labels, window: int, n_trees: int, seed: int = 0, *, stride: int | None = None,
              max_patches: int | None = None, min_samples_leaf: int = 1, workers: int | None = None) -> GsmForests:
    """Train the scanning RF and CRF for one window size on labelled patches.

    ``patches`` is ``(n, window*window*3)``; each patch carries its source
    image's label.  ``max_patches`` caps the training set with a seeded
    subsample.
    """
    X = np.asarray(patches, dtype=np.float32)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DegenerateDataError("empty patch set")
    if X.shape[1] != window * window * 3:
        raise ValueError(f"patch length {X.shape[1]} does not match window {window}")
    if np.unique(y).size < 2:
        raise DegenerateDataError("patch set has a single class")
    if max_patches is not None and X.shape[0] > max_patches:
        keep = np.sort(generator(seed, 0x5CA7).choice(X.shape[0], size=max_patches, replace=False))
        X, y = X[keep], y[keep]
    kw = dict(min_samples_leaf=min_samples_leaf, workers=workers)
    rf = train_random_forest(X, y, n_trees, derive_seed(seed, window, 0), oob=True, **kw)
    crf = train_completely_random_forest(X, y, n_trees, derive_seed(seed, window, 1), **kw)
    return GsmForests(window, stride if stride is not None else window // 2, rf, crf)


def gsm_representation(img: Image, forests: GsmForests, window: int | None = None,
                       stride: int | None = None) -> np.ndarray:
    """Per patch (row-major): RF class vector then CRF class vector."""
    window = forests.window if window is None else window
    stride = forests.stride if stride is None else stride
    if window != forests.window or forests.rf.n_features != window * window * 3:
        raise ValueError(f"forests were trained for window {forests.window}, not {window}")
    patches = extract_patches(img, window, stride)
    rf = forests.rf.predict_proba(patches)
    crf = forests.crf.predict_proba(patches)
    return np.concatenate([rf, crf], axis=1).reshape(-1).astype(np.float32)


# ---------------------------------------------------------------------------
# feature cache container

CACHE_MAGIC = b"LBPF"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIIII3II")  # magic, version, n, n_scales, space, 3 lengths, meta bytes
_SPACE_TAGS = {ColorSpace.RGB: 0, ColorSpace.HSV: 1, ColorSpace.YCBCR: 2}


@dataclass
class FeatureCache:
    space: ColorSpace
    scales: tuple[np.ndarray, np.ndarray, np.ndarray]
    metadata: dict

    @property
    def n_samples(self) -> int:
        return self.scales[0].shape[0]

    @property
    def lengths(self) -> tuple[int, int, int]:
        return tuple(int(s.shape[1]) for s in self.scales)

    def subset(self, rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(s[rows] for s in self.scales)


def write_cache(path, space: ColorSpace | str, scales, metadata: dict | None = None) -> None:
    """Write the binary feature cache (layout documented in README)."""
    space = ColorSpace.parse(space)
    mats = [np.ascontiguousarray(s, dtype="<f4") for s in scales]
    if len(mats) != 3 or len({m.shape[0] for m in mats}) != 1 or any(m.ndim != 2 for m in mats):
        raise ValueError("expected three (n, length) matrices with equal row counts")
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, mats[0].shape[0], 3, _SPACE_TAGS[space],
                          *(m.shape[1] for m in mats), len(meta))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta)
        for m in mats:
            fh.write(m.tobytes())


def read_cache_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature cache header")
    magic, version, n, n_scales, tag, l1, l2, l3, meta_len = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: not a feature cache")
    if version != CACHE_VERSION or n_scales != 3:
        raise ValueError(f"{path}: unsupported cache version {version}")
    space = {v: k for k, v in _SPACE_TAGS.items()}[tag]
    return {"version": version, "n_samples": n, "space": space, "lengths": (l1, l2, l3), "meta_bytes": meta_len}


def read_cache(path) -> FeatureCache:
    head = read_cache_header(path)
    n = head["n_samples"]
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        meta = json.loads(fh.read(head["meta_bytes"]).decode("utf-8"))
        mats = []
        for length in head["lengths"]:
            buf = fh.read(4 * n * length)
            if len(buf) != 4 * n * length:
                raise ValueError(f"{path}: truncated feature matrix")
            mats.append(np.frombuffer(buf, dtype="<f4").reshape(n, length).astype(np.float32))
    return FeatureCache(head["space"], tuple(mats), meta)
