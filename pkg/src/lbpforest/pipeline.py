"""End-to-end training and scoring on manifest-described datasets."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import CascadeConfig, CascadeModel, train_cascade
from .config import DatasetManifest, RunConfig
from .evaluation import EvalReport, ScoredSample, aggregate_by_group, eer, evaluate, kfold_split, validation_split
from .features import GSM_WINDOWS, GsmForests, extract_all_scales, extract_patches, gsm_representation, gsm_train
from .forest import Forest
from .imagio import Image, load_image, prepare

log = logging.getLogger(__name__)


def _map(fn, items, workers):
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def load_prepared(manifest: DatasetManifest, space, rows=None, workers: int | None = None) -> list[Image]:
    records = manifest.records if rows is None else [manifest.records[i] for i in rows]
    return _map(lambda r: prepare(load_image(r.path), space), records, workers)


def extract_features(manifest: DatasetManifest, space, workers: int | None = None):
    """Three float32 matrices (one row per manifest record)."""

    def one(rec):
        return extract_all_scales(prepare(load_image(rec.path), space))

    triples = _map(one, manifest.records, workers)
    return tuple(np.stack([t[s] for t in triples]) for s in range(3))


def cascade_config(cfg: RunConfig) -> CascadeConfig:
    return CascadeConfig(n_trees=cfg.trees, k_folds=cfg.folds, patience=cfg.patience,
                         max_layers=cfg.max_layers, seed=cfg.seed, workers=cfg.workers)


@dataclass
class TrainedGsm:
    forests: list[GsmForests]
    cascade: CascadeModel

    def representations(self, images: list[Image]):
        return tuple(np.stack([gsm_representation(img, f) for img in images]) for f in self.forests)

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        scan = []
        for f in self.forests:
            rf_name, crf_name = f"scan{f.window}_rf.json", f"scan{f.window}_crf.json"
            f.rf.save(os.path.join(directory, rf_name))
            f.crf.save(os.path.join(directory, crf_name))
            scan.append({"window": f.window, "stride": f.stride, "rf": rf_name, "crf": crf_name})
        with open(os.path.join(directory, "scanning.json"), "w") as fh:
            json.dump({"format": "lbpforest.gsm", "version": 1, "windows": scan}, fh, indent=1, sort_keys=True)
        self.cascade.save(os.path.join(directory, "cascade"))

    @classmethod
    def load(cls, directory) -> "TrainedGsm":
        with open(os.path.join(directory, "scanning.json")) as fh:
            doc = json.load(fh)
        forests = [
            GsmForests(w["window"], w["stride"], Forest.load(os.path.join(directory, w["rf"])),
                       Forest.load(os.path.join(directory, w["crf"])))
            for w in doc["windows"]
        ]
        return cls(forests, CascadeModel.load(os.path.join(directory, "cascade")))


def _val_records(labels, subjects, groups, scores) -> list[dict]:
    return [{"score": float(s), "label": int(l), "group": g, "subject": sub}
            for s, l, g, sub in zip(scores, labels, groups, subjects)]


def fit_lbp(scales, labels, subjects, groups, cfg: RunConfig) -> CascadeModel:
    """Train the LBP cascade with an internal subject-disjoint validation split."""
    labels = np.asarray(labels)
    val = validation_split(labels, subjects, cfg.val_fraction, cfg.seed)
    tr = ~val
    model = train_cascade([s[tr] for s in scales], labels[tr], [s[val] for s in scales], labels[val],
                          cascade_config(cfg))
    val_scores = model.predict_score([s[val] for s in scales])
    model.metadata["validation"] = _val_records(labels[val], np.asarray(subjects)[val],
                                                np.asarray(groups, dtype=object)[val], val_scores)
    return model


def fit_gsm(images: list[Image], labels, subjects, groups, cfg: RunConfig) -> TrainedGsm:
    """Grained-scanning baseline: scanning forests per window, then the same cascade."""
    labels = np.asarray(labels)
    val = validation_split(labels, subjects, cfg.val_fraction, cfg.seed)
    tr = np.flatnonzero(~val)
    forests = []
    for window, stride in GSM_WINDOWS:
        patches = np.concatenate([extract_patches(images[i], window, stride) for i in tr])
        per_image = patches.shape[0] // tr.size
        patch_labels = np.repeat(labels[tr], per_image)
        log.info("gsm window %d: %d patches", window, patches.shape[0])
        forests.append(gsm_train(patches, patch_labels, window, cfg.trees, cfg.seed, stride=stride,
                                 max_patches=cfg.gsm_max_patches, min_samples_leaf=cfg.gsm_min_samples_leaf,
                                 workers=cfg.workers))
        del patches
    reps = TrainedGsm(forests, None).representations(images)
    model = train_cascade([r[~val] for r in reps], labels[~val], [r[val] for r in reps], labels[val],
                          cascade_config(cfg))
    val_scores = model.predict_score([r[val] for r in reps])
    model.metadata["validation"] = _val_records(labels[val], np.asarray(subjects)[val],
                                                np.asarray(groups, dtype=object)[val], val_scores)
    return TrainedGsm(forests, model)


def scored_samples(scores, labels, groups, aggregate: str) -> list[ScoredSample]:
    samples = [ScoredSample(float(np.clip(s, 0.0, 1.0)), int(l), g) for s, l, g in zip(scores, labels, groups)]
    if aggregate == "mean":
        return aggregate_by_group(samples)
    return samples


def dev_threshold(model: CascadeModel, aggregate: str) -> float | None:
    recs = model.metadata.get("validation")
    if not recs:
        return None
    samples = scored_samples([r["score"] for r in recs], [r["label"] for r in recs],
                             [r["group"] for r in recs], aggregate)
    if len({s.label for s in samples}) < 2:
        return None
    return eer(samples)[1]


def report_for(model: CascadeModel, scores, labels, groups, aggregate: str, metadata=None) -> EvalReport:
    samples = scored_samples(scores, labels, groups, aggregate)
    return evaluate(samples, dev_threshold(model, aggregate), metadata)


def holdout_rows(manifest: DatasetManifest, test_fold: int) -> tuple[np.ndarray, np.ndarray]:
    folds = [r.fold for r in manifest.records]
    test = np.array([f == test_fold for f in folds])
    if not test.any() or test.all():
        raise ValueError(f"holdout protocol needs rows with fold == {test_fold} and rows without")
    return np.flatnonzero(~test), np.flatnonzero(test)


def kfold_rows(manifest: DatasetManifest, k: int, seed: int):
    folds = kfold_split(manifest.labels, manifest.subjects, k, seed)
    return [(np.flatnonzero(folds != f), np.flatnonzero(folds == f)) for f in range(k)]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(directory) -> str:
    """SHA-256 over every file below ``directory`` (sorted relative paths)."""
    h = hashlib.sha256()
    for root, _, files in sorted(os.walk(directory)):
        for name in sorted(files):
            full = os.path.join(root, name)
            h.update(os.path.relpath(full, directory).encode())
            h.update(file_digest(full).encode())
    return h.hexdigest()
