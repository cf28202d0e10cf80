"""Random forests and completely-random forests for two-class problems.

Trees are stored as flat node arrays.  Every tree draws its randomness from
``derive_seed(forest_seed, tree_index)``, so a forest is a pure function of
``(X, y, seed, params)`` no matter how many worker threads grow it.
"""

from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import derive_seed, generator

FOREST_FORMAT = "lbpforest.forest"
FOREST_VERSION = 1


class DegenerateDataError(ValueError):
    """Training data that cannot define a two-class problem."""


class ForestKind(str, enum.Enum):
    RANDOM = "random"
    COMPLETELY_RANDOM = "completely_random"


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row (slow path, for inspection)."""
        leaves = np.empty(X.shape[0], dtype=np.int64)
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            leaves[i] = node
        return leaves

    def to_records(self) -> list:
        return [
            [int(f), float(t), int(l), int(r), float(v[0]), float(v[1])]
            for f, t, l, r, v in zip(self.feature, self.threshold, self.left, self.right, self.value)
        ]

    @classmethod
    def from_records(cls, records) -> "Tree":
        arr = list(zip(*records))
        return cls(
            feature=np.asarray(arr[0], dtype=np.int32),
            threshold=np.asarray(arr[1], dtype=np.float64),
            left=np.asarray(arr[2], dtype=np.int32),
            right=np.asarray(arr[3], dtype=np.int32),
            value=np.column_stack([np.asarray(arr[4], dtype=np.float64), np.asarray(arr[5], dtype=np.float64)]),
        )


@dataclass
class Forest:
    kind: ForestKind
    trees: list[Tree]
    seed: int
    n_features: int
    params: dict = field(default_factory=dict)
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        """Average leaf distribution; ``(n, 2)`` for a matrix, ``(2,)`` for one vector."""
        X = np.asarray(X)
        single = X.ndim == 1
        X = _as_matrix(X[None, :] if single else X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.zeros((X.shape[0], 2), dtype=np.float64)
        for t in self.trees:
            _kernels.accumulate_tree(X, t.feature, t.threshold, t.left, t.right, t.value, out)
        out /= len(self.trees)
        return out[0] if single else out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "kind": self.kind.value,
            "seed": int(self.seed),
            "n_trees": self.n_trees,
            "n_features": int(self.n_features),
            "n_classes": 2,
            "params": dict(self.params),
            "node_fields": ["feature", "threshold", "left", "right", "p_genuine", "p_spoof"],
            "trees": [{"nodes": t.to_records()} for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Forest":
        if doc.get("format") != FOREST_FORMAT:
            raise ValueError("not a forest document")
        if doc.get("version") != FOREST_VERSION:
            raise ValueError(f"unsupported forest version {doc.get('version')}")
        trees = [Tree.from_records(t["nodes"]) for t in doc["trees"]]
        return cls(ForestKind(doc["kind"]), trees, int(doc["seed"]), int(doc["n_features"]), dict(doc.get("params", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D sample x feature matrix, got {X.ndim}-D")
    return X


def _check_xy(X, y):
    X = _as_matrix(X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise DegenerateDataError("empty training set")
    if y.shape != (X.shape[0],):
        raise ValueError(f"{X.shape[0]} samples but {y.shape} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (genuine) or 1 (spoof)")
    if X.shape[0] < 2 or np.unique(y).size < 2:
        raise DegenerateDataError("training data needs both classes")
    if np.isnan(X).any():
        raise ValueError("NaN in features")
    return X, y.astype(np.int8)


def default_workers() -> int:
    return os.cpu_count() or 1


def train_forest(X, y, kind: ForestKind | str, n_trees: int = 500, seed: int = 0, *,
                 min_samples_leaf: int = 1, max_depth: int | None = None,
                 max_features: int | None = None, oob: bool = False,
                 workers: int | None = None) -> Forest:
    kind = ForestKind(kind)
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    X, y = _check_xy(X, y)
    n, d = X.shape
    XT = np.ascontiguousarray(X.T)
    if max_features is None:
        max_features = math.ceil(math.sqrt(d))
    max_features = max(1, min(int(max_features), d))
    mode = _kernels.MODE_RANDOM if kind is ForestKind.RANDOM else _kernels.MODE_COMPLETELY_RANDOM
    depth_cap = -1 if max_depth is None else int(max_depth)

    def grow(t: int):
        rng = generator(seed, t)
        if kind is ForestKind.RANDOM:
            sample = rng.integers(0, n, size=n, dtype=np.int64)
        else:
            sample = np.arange(n, dtype=np.int64)
        node_seed = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
        arrays = _kernels.build_tree(XT, y, sample, mode, max_features, int(min_samples_leaf), depth_cap, node_seed)
        return Tree(*arrays), sample

    workers = workers or default_workers()
    if workers == 1:
        grown = [grow(t) for t in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grown = list(pool.map(grow, range(n_trees)))

    params = {"min_samples_leaf": int(min_samples_leaf), "max_depth": max_depth, "max_features": max_features}
    forest = Forest(kind, [g[0] for g in grown], int(seed), d, params)
    if oob:
        forest.oob_accuracy = _oob_accuracy(X, y, grown)
    return forest


def _oob_accuracy(X, y, grown) -> float:
    n = X.shape[0]
    votes = np.zeros((n, 2))
    hits = np.zeros(n, dtype=np.int64)
    for tree, sample in grown:
        in_bag = np.zeros(n, dtype=bool)
        in_bag[sample] = True
        rows = np.flatnonzero(~in_bag).astype(np.int64)
        _kernels.accumulate_tree_rows(X, rows, tree.feature, tree.threshold, tree.left, tree.right,
                                      tree.value, votes, hits)
    seen = hits > 0
    if not seen.any():
        return float("nan")
    return float(np.mean(np.argmax(votes[seen], axis=1) == y[seen]))


def train_random_forest(X, y, n_trees: int = 500, seed: int = 0, **kwargs) -> Forest:
    """Bagged Gini trees with ``ceil(sqrt(d))`` candidate features per node."""
    return train_forest(X, y, ForestKind.RANDOM, n_trees, seed, **kwargs)


def train_completely_random_forest(X, y, n_trees: int = 500, seed: int = 0, **kwargs) -> Forest:
    """Trees with uniformly random split features and thresholds, no bootstrap."""
    kwargs.pop("oob", None)
    return train_forest(X, y, ForestKind.COMPLETELY_RANDOM, n_trees, seed, **kwargs)


def predict_proba(forest: Forest, x) -> np.ndarray:
    return forest.predict_proba(x)


def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > y.shape[0]:
        raise DegenerateDataError(f"{k} folds for {y.shape[0]} samples")
    rng = generator(seed, 0xF01D)
    folds = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        folds[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return folds


@dataclass
class CrossFit:
    """Out-of-fold class vectors plus the all-data forest for inference."""

    vectors: np.ndarray
    folds: np.ndarray
    forest: Forest
    fold_train_indices: list[np.ndarray]
    fold_predict_indices: list[np.ndarray]


def kfold_class_vectors(X, y, kind: ForestKind | str, n_trees: int, k: int = 3, seed: int = 0,
                        **kwargs) -> CrossFit:
    """Cross-fitted 2-class vectors: each sample is scored by a forest that never saw it."""
    X, y = _check_xy(X, y)
    folds = stratified_folds(y, k, seed)
    vectors = np.empty((X.shape[0], 2), dtype=np.float64)
    train_sets, predict_sets = [], []
    for f in range(k):
        test_idx = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero(folds != f)
        if np.unique(y[train_idx]).size < 2:
            raise DegenerateDataError(f"fold {f} training split lacks a class")
        fold_forest = train_forest(X[train_idx], y[train_idx], kind, n_trees, derive_seed(seed, f), **kwargs)
        vectors[test_idx] = fold_forest.predict_proba(X[test_idx])
        train_sets.append(train_idx)
        predict_sets.append(test_idx)
    final = train_forest(X, y, kind, n_trees, derive_seed(seed, k), **kwargs)
    return CrossFit(vectors, folds, final, train_sets, predict_sets)
