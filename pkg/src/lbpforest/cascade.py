"""Deep-forest cascade with circular multi-scale fusion.

Layer ``n`` (1-based) reads scale ``((n - 1) % 3) + 1`` with the previous
layer's 16 class-vector columns appended.  Each layer holds 4 random and 4
completely-random forests.  Training-time augmentation is cross-fitted;
inference uses forests refit on all training rows.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .forest import CrossFit, DegenerateDataError, Forest, ForestKind, kfold_class_vectors
from ._rng import derive_seed

FOREST_KINDS = (ForestKind.RANDOM,) * 4 + (ForestKind.COMPLETELY_RANDOM,) * 4
AUG_WIDTH = 2 * len(FOREST_KINDS)
MODEL_FORMAT = "lbpforest.cascade"
MODEL_VERSION = 1


@dataclass
class CascadeConfig:
    n_trees: int = 500
    k_folds: int = 3
    patience: int = 2
    max_layers: int = 12
    seed: int = 0
    min_samples_leaf: int = 1
    max_depth: int | None = None
    # execution only; never changes the fitted model and is not serialized
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_trees < 1 or self.k_folds < 2 or self.patience < 1 or self.max_layers < 1:
            raise ValueError(f"invalid cascade config {self}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    def forest_kwargs(self) -> dict:
        return {"min_samples_leaf": self.min_samples_leaf, "max_depth": self.max_depth, "workers": self.workers}


def scale_index(n: int) -> int:
    """Scale (1, 2 or 3) consumed by layer ``n``."""
    if n < 1:
        raise ValueError("layers are numbered from 1")
    return (n - 1) % 3 + 1


def layer_input(n: int, scales: Sequence[np.ndarray], prev_aug: np.ndarray | None = None) -> np.ndarray:
    """Scale ``scale_index(n)`` with the previous augmentation appended.

    Works on single vectors or on sample-major matrices.
    """
    if scales is None or len(scales) != 3 or any(s is None for s in scales):
        raise ValueError("need all three scale representations")
    if (n == 1) != (prev_aug is None):
        raise ValueError("layer 1 takes no augmentation; later layers require it")
    base = np.asarray(scales[scale_index(n) - 1], dtype=np.float32)
    if prev_aug is None:
        return base
    prev_aug = np.asarray(prev_aug, dtype=np.float32)
    if prev_aug.shape[-1] != AUG_WIDTH:
        raise ValueError(f"augmentation must have {AUG_WIDTH} columns")
    return np.concatenate([base, prev_aug], axis=-1)


def accuracy(y_true, proba) -> float:
    return float(np.mean(np.argmax(proba, axis=1) == np.asarray(y_true)))


class ConvergenceMonitor:
    """Stops once the score has not strictly improved for ``patience`` layers."""

    def __init__(self, patience: int, max_layers: int):
        self.patience = patience
        self.max_layers = max_layers
        self.history: list[float] = []
        self.best_layer = 0
        self.best_score = -np.inf
        self._stale = 0

    def update(self, score: float) -> bool:
        """Record the next layer's score; return True when growth should stop."""
        self.history.append(float(score))
        if score > self.best_score:
            self.best_score = float(score)
            self.best_layer = len(self.history)
            self._stale = 0
        else:
            self._stale += 1
        return self._stale >= self.patience or len(self.history) >= self.max_layers


@dataclass
class Layer:
    index: int
    scale: int
    forests: list[Forest]
    val_score: float

    def augment(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        probas = [f.predict_proba(X) for f in self.forests]
        return np.concatenate(probas, axis=1), probas


@dataclass
class LayerTrace:
    """What happened while growing one layer; handed to ``on_layer`` hooks."""

    index: int
    scale: int
    input_width: int
    val_score: float
    crossfits: list[CrossFit]
    train_augmentation: np.ndarray


@dataclass
class CascadeModel:
    config: CascadeConfig
    layers: list[Layer]
    best_layer: int
    scale_lengths: tuple[int, int, int]
    metadata: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def _check(self, scales) -> list[np.ndarray]:
        mats = [np.asarray(s, dtype=np.float32) for s in scales]
        if len(mats) != 3:
            raise ValueError("need three scale representations")
        for m, length in zip(mats, self.scale_lengths):
            if m.shape[-1] != length:
                raise ValueError(f"scale length {m.shape[-1]} != trained length {length}")
        return mats

    def layer_probas(self, scales, upto: int | None = None) -> list[np.ndarray]:
        """Per-layer mean class distribution for layers ``1 .. upto``."""
        mats = self._check(scales)
        single = mats[0].ndim == 1
        if single:
            mats = [m[None, :] for m in mats]
        upto = self.best_layer if upto is None else upto
        out, aug = [], None
        for layer in self.layers[:upto]:
            aug, probas = layer.augment(layer_input(layer.index, mats, aug))
            mean = np.mean(probas, axis=0)
            out.append(mean[0] if single else mean)
        return out

    def predict_proba(self, scales) -> np.ndarray:
        """``(genuine, spoof)`` distribution from the best layer."""
        spoof = self.predict_score(scales)
        return np.stack([1.0 - spoof, spoof], axis=-1)

    def predict_score(self, scales):
        """Spoof probability: mean spoof output of the best layer's 8 forests."""
        return self.layer_probas(scales)[-1][..., 1]

    # -- persistence -------------------------------------------------------

    def manifest(self, forest_files: list[list[str]]) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "scale_lengths": list(self.scale_lengths),
            "best_layer": self.best_layer,
            "n_classes": 2,
            "layers": [
                {"index": L.index, "scale": L.scale, "val_score": L.val_score,
                 "forest_kinds": [f.kind.value for f in L.forests], "forests": files}
                for L, files in zip(self.layers, forest_files)
            ],
            "metadata": self.metadata,
        }

    def save(self, directory) -> str:
        """Write ``cascade.json`` plus one forest JSON per forest; return the manifest path."""
        os.makedirs(directory, exist_ok=True)
        files = []
        for L in self.layers:
            names = []
            for j, forest in enumerate(L.forests):
                name = f"layer{L.index:02d}_forest{j}.json"
                forest.save(os.path.join(directory, name))
                names.append(name)
            files.append(names)
        path = os.path.join(directory, "cascade.json")
        with open(path, "w") as fh:
            json.dump(self.manifest(files), fh, indent=1, sort_keys=True)
        return path

    @classmethod
    def load(cls, directory) -> "CascadeModel":
        path = directory if str(directory).endswith(".json") else os.path.join(directory, "cascade.json")
        base = os.path.dirname(path)
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a cascade manifest")
        config = CascadeConfig(**doc["config"])
        layers = [
            Layer(L["index"], L["scale"], [Forest.load(os.path.join(base, f)) for f in L["forests"]], L["val_score"])
            for L in doc["layers"]
        ]
        return cls(config, layers, int(doc["best_layer"]), tuple(doc["scale_lengths"]), doc.get("metadata", {}))


def _check_labels(y, what: str) -> np.ndarray:
    y = np.asarray(y)
    if y.size == 0:
        raise DegenerateDataError(f"empty {what} set")
    if np.unique(y).size < 2:
        raise DegenerateDataError(f"{what} set needs both classes")
    return y


def train_cascade(train_scales: Sequence[np.ndarray], y_train, val_scales: Sequence[np.ndarray], y_val,
                  cfg: CascadeConfig, *, metric: Callable[[np.ndarray, np.ndarray], float] = accuracy,
                  on_layer: Callable[[LayerTrace], None] | None = None) -> CascadeModel:
    """Grow layers until the validation score stops improving.

    ``metric(y_val, mean_proba)`` scores each layer (accuracy by default);
    the best layer is the earliest one with the highest score.
    """
    y_train = _check_labels(y_train, "training")
    y_val = _check_labels(y_val, "validation")
    train_scales = [np.asarray(s, dtype=np.float32) for s in train_scales]
    val_scales = [np.asarray(s, dtype=np.float32) for s in val_scales]
    lengths = tuple(int(s.shape[1]) for s in train_scales)
    if tuple(int(s.shape[1]) for s in val_scales) != lengths:
        raise ValueError("train and validation scale lengths differ")

    monitor = ConvergenceMonitor(cfg.patience, cfg.max_layers)
    layers: list[Layer] = []
    aug_train = aug_val = None
    n = 0
    while True:
        n += 1
        X_tr = layer_input(n, train_scales, aug_train)
        X_val = layer_input(n, val_scales, aug_val)
        crossfits, val_probas = [], []
        for j, kind in enumerate(FOREST_KINDS):
            cf = kfold_class_vectors(X_tr, y_train, kind, cfg.n_trees, cfg.k_folds,
                                     derive_seed(cfg.seed, n, j), **cfg.forest_kwargs())
            crossfits.append(cf)
            val_probas.append(cf.forest.predict_proba(X_val))
        aug_train = np.concatenate([cf.vectors for cf in crossfits], axis=1)
        aug_val = np.concatenate(val_probas, axis=1)
        score = float(metric(y_val, np.mean(val_probas, axis=0)))
        layers.append(Layer(n, scale_index(n), [cf.forest for cf in crossfits], score))
        if on_layer is not None:
            on_layer(LayerTrace(n, scale_index(n), X_tr.shape[1], score, crossfits, aug_train))
        if monitor.update(score):
            break
    return CascadeModel(cfg, layers, monitor.best_layer, lengths)


def predict_score(model: CascadeModel, scales) -> np.ndarray | float:
    return model.predict_score(scales)
