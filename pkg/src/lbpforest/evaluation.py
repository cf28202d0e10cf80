"""Biometric error rates and evaluation protocols.

Scores are spoof probabilities: higher means more likely an attack.  A
sample is accepted as genuine when ``score < t``, so

* FAR(t) = fraction of spoof samples with score < t
* FRR(t) = fraction of genuine samples with score >= t
"""

from __future__ import annotations

import enum
import json
import math
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .forest import DegenerateDataError
from ._rng import generator


class Label(enum.IntEnum):
    GENUINE = 0
    SPOOF = 1

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip().lower()
        for member in cls:
            if member.name.lower() == text:
                return member
        raise ValueError(f"unknown label {value!r}; expected 'genuine' or 'spoof'")


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: Label
    group: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "label", Label.parse(self.label))


def _split(samples) -> tuple[np.ndarray, np.ndarray]:
    """Accept ScoredSamples or a ``(scores, labels)`` pair; return (genuine, spoof) scores."""
    if isinstance(samples, tuple) and len(samples) == 2 and not isinstance(samples[0], ScoredSample):
        scores = np.asarray(samples[0], dtype=np.float64)
        labels = np.asarray(samples[1])
    else:
        samples = list(samples)
        scores = np.array([s.score for s in samples], dtype=np.float64)
        labels = np.array([int(s.label) for s in samples])
    genuine = scores[labels == Label.GENUINE]
    spoof = scores[labels == Label.SPOOF]
    if genuine.size == 0 or spoof.size == 0:
        raise DegenerateDataError("need at least one genuine and one spoof score")
    return genuine, spoof


def error_rates(genuine: np.ndarray, spoof: np.ndarray, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """FAR and FRR at each threshold (step functions, no interpolation)."""
    genuine = np.sort(genuine)
    spoof = np.sort(spoof)
    far = np.searchsorted(spoof, thresholds, side="left") / spoof.size
    frr = 1.0 - np.searchsorted(genuine, thresholds, side="left") / genuine.size
    return far, frr


def det_curve(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(thresholds, far, frr)`` at every distinct score plus one point above the maximum."""
    genuine, spoof = _split(samples)
    distinct = np.unique(np.concatenate([genuine, spoof]))
    thresholds = np.append(distinct, np.nextafter(distinct[-1], np.inf))
    far, frr = error_rates(genuine, spoof, thresholds)
    return thresholds, far, frr


def eer(samples) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross.

    Between the two thresholds that bracket the crossing, FAR and FRR are
    interpolated linearly.  When FAR == FRR holds on a whole interval of
    thresholds, the threshold returned is the middle of that interval.
    """
    t, far, frr = det_curve(samples)
    gap = far - frr  # non-decreasing from -1 to +1
    i = int(np.argmax(gap >= 0))
    if gap[i] == 0:
        j = int(np.argmax(gap > 0)) - 1
        return float(far[i]), float((t[i - 1] + t[j]) / 2)
    alpha = -gap[i - 1] / (gap[i] - gap[i - 1])
    rate = far[i - 1] + alpha * (far[i] - far[i - 1])
    thr = t[i - 1] + alpha * (t[i] - t[i - 1])
    return float(rate), float(thr)


def hter(dev, test, threshold: float | None = None) -> float:
    """Half total error rate on ``test`` at the dev-set EER threshold.

    Pass ``threshold`` directly when it was fixed elsewhere (e.g. on a
    training-side validation split).
    """
    if threshold is None:
        _, threshold = eer(dev)
    genuine, spoof = _split(test)
    far, frr = error_rates(genuine, spoof, np.array([threshold]))
    return float((far[0] + frr[0]) / 2)


def aggregate_by_group(samples: Iterable[ScoredSample]) -> list[ScoredSample]:
    """Mean score per group; ungrouped samples pass through unchanged."""
    groups: "OrderedDict[str, list[ScoredSample]]" = OrderedDict()
    out = []
    for s in samples:
        if s.group is None:
            out.append(s)
        else:
            groups.setdefault(s.group, []).append(s)
    for name, members in groups.items():
        labels = {m.label for m in members}
        if len(labels) > 1:
            raise ValueError(f"group {name!r} mixes genuine and spoof samples")
        mean = math.fsum(m.score for m in members) / len(members)
        out.append(ScoredSample(mean, members[0].label, name))
    return out


def kfold_split(labels: Sequence, subjects: Sequence[str], k: int = 5, seed: int = 0) -> np.ndarray:
    """Subject-disjoint, class-balanced fold id for every record.

    Subjects are shuffled with ``seed``, ordered by majority class and size,
    then each goes to the fold holding the fewest samples of its majority
    class (ties: fewest samples overall, then lowest fold id).
    """
    labels = np.array([int(Label.parse(v)) for v in labels])
    subjects = np.asarray([str(s) for s in subjects])
    if labels.shape != subjects.shape:
        raise ValueError("labels and subjects differ in length")
    names = sorted(set(subjects.tolist()))
    if len(names) < k:
        raise DegenerateDataError(f"{len(names)} subjects cannot fill {k} folds")
    order = generator(seed, 0x5B).permutation(len(names))
    counts = {name: np.zeros(2, dtype=np.int64) for name in names}
    for lab, sub in zip(labels, subjects):
        counts[sub][lab] += 1
    shuffled = [names[i] for i in order]
    shuffled.sort(key=lambda s: (int(np.argmax(counts[s])), -int(counts[s].sum())))

    fold_counts = np.zeros((k, 2), dtype=np.int64)
    assign = {}
    for s in shuffled:
        major = int(np.argmax(counts[s]))
        f = min(range(k), key=lambda j: (fold_counts[j, major], fold_counts[j].sum(), j))
        assign[s] = f
        fold_counts[f] += counts[s]
    return np.array([assign[s] for s in subjects], dtype=np.int64)


def validation_split(labels, subjects, fraction: float = 0.2, seed: int = 0) -> np.ndarray:
    """Boolean mask of a stratified, subject-disjoint hold-out of about ``fraction``."""
    k = max(2, int(round(1.0 / fraction)))
    folds = kfold_split(labels, subjects, k, seed)
    return folds == 0


@dataclass
class EvalReport:
    eer: float
    eer_threshold: float
    hter: float | None
    hter_threshold: float | None
    thresholds: list[float]
    far: list[float]
    frr: list[float]
    n_genuine: int
    n_spoof: int
    folds: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "hter": self.hter,
            "hter_threshold": self.hter_threshold,
            "n_genuine": self.n_genuine,
            "n_spoof": self.n_spoof,
            "curve": {"threshold": self.thresholds, "far": self.far, "frr": self.frr},
            "folds": self.folds,
            "summary": self.summary(),
            "metadata": self.metadata,
        }

    def summary(self) -> dict:
        if not self.folds:
            return {"eer_mean": self.eer, "eer_std": 0.0, "hter_mean": self.hter, "hter_std": 0.0 if self.hter is not None else None}
        e = np.array([f["eer"] for f in self.folds])
        h = [f["hter"] for f in self.folds if f.get("hter") is not None]
        return {
            "eer_mean": float(e.mean()), "eer_std": float(e.std()),
            "hter_mean": float(np.mean(h)) if h else None, "hter_std": float(np.std(h)) if h else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def evaluate(test, dev_threshold: float | None = None, metadata: dict | None = None) -> EvalReport:
    thresholds, far, frr = det_curve(test)
    rate, thr = eer(test)
    genuine, spoof = _split(test)
    h = hter(None, test, dev_threshold) if dev_threshold is not None else None
    return EvalReport(rate, thr, h, dev_threshold, thresholds.tolist(), far.tolist(), frr.tolist(),
                      int(genuine.size), int(spoof.size), metadata=dict(metadata or {}))


def format_table(rows: dict[str, EvalReport]) -> str:
    """Plain-text table: EER% and HTER%, with mean +- std when folds exist."""

    def cell(mean, std, has_folds):
        if mean is None:
            return "-"
        return f"{100 * mean:.3f}+-{100 * std:.3f}" if has_folds else f"{100 * mean:.3f}"

    lines = [f"{'Method':<24}{'EER (%)':>20}{'HTER (%)':>20}"]
    for name, rep in rows.items():
        s = rep.summary()
        folded = bool(rep.folds)
        lines.append(f"{name:<24}{cell(s['eer_mean'], s['eer_std'], folded):>20}"
                     f"{cell(s['hter_mean'], s['hter_std'], folded):>20}")
        for i, f in enumerate(rep.folds):
            h = "-" if f.get("hter") is None else f"{100 * f['hter']:.3f}"
            lines.append(f"{'  fold ' + str(i):<24}{100 * f['eer']:>20.3f}{h:>20}")
    return "\n".join(lines) + "\n"
