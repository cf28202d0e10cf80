"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from lbpforest.cascade import CascadeConfig, ConvergenceMonitor, scale_index, train_cascade
from lbpforest.cli import main
from lbpforest.evaluation import eer
from lbpforest.features import Scale, extract_all_scales, gsm_length
from lbpforest.forest import ForestKind, train_forest
from lbpforest.imagio import Image
from lbpforest.lbp import LbpConfig, build_u2_map, lbp_codes
from lbpforest.pipeline import tree_digest
from oracles import count_transitions, eer_sweep, lbp_bins, uniform_patterns

pytestmark = pytest.mark.acceptance


def random_image(rng, high=256):
    return Image(rng.integers(0, high, (128, 128, 3), dtype=np.uint8))


# -- 1 ------------------------------------------------------------------------


def test_feature_lengths(criterion):
    rng = np.random.default_rng(1)
    extract_all_scales(random_image(rng))  # warm caches
    images = [random_image(rng), Image(np.zeros((128, 128, 3), np.uint8)), Image(np.full((128, 128, 3), 255, np.uint8))]
    start = time.perf_counter()
    lengths = [tuple(v.size for v in extract_all_scales(img)) for img in images]
    per_image = (time.perf_counter() - start) / len(images)
    bins = tuple(s.config.n_bins for s in Scale)
    ok = (all(L == (8673, 35721, 81585) for L in lengths) and bins == (59, 243, 555)
          and all(L == tuple(49 * b * 3 for b in bins) for L in lengths) and per_image < 1.0)
    assert criterion(1, "feature-length exactness", ok, f"lengths {lengths[0]}, bins {bins}, {per_image:.2f} s/image")


# -- 2 ------------------------------------------------------------------------


def test_lbp_oracle_equivalence(criterion):
    rng = np.random.default_rng(2)
    configs = [LbpConfig(8, 1), LbpConfig(16, 2), LbpConfig(24, 3)]
    start = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        plane = rng.integers(0, 256, (16, 16), dtype=np.uint8)
        for cfg in configs:
            mismatches += int(not np.array_equal(lbp_codes(plane, cfg).codes, lbp_bins(plane, cfg.P, cfg.R)))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10.0
    assert criterion(2, "LBP oracle equivalence", ok, f"300 planes, {mismatches} mismatches, {elapsed:.1f} s")


# -- 3 ------------------------------------------------------------------------


def _transitions_vectorized(patterns, P):
    bits = (patterns[:, None] >> np.arange(P, dtype=np.int64)) & 1
    return np.count_nonzero(bits != np.roll(bits, -1, axis=1), axis=1)


def test_uniform_combinatorics(criterion):
    start = time.perf_counter()
    details, ok = [], True
    for P in (8, 16):
        counted = sum(count_transitions(p, P) <= 2 for p in range(1 << P))
        table = build_u2_map(P)
        uniform_bins = int((table < P * (P - 1) + 2).sum())
        ok &= counted == uniform_bins == P * (P - 1) + 2 == len(uniform_patterns(P))
        details.append(f"P={P}: {counted}")
    P = 24
    table = build_u2_map(P)
    sample = np.random.default_rng(3).integers(0, 1 << P, 10**6, dtype=np.int64)
    sample = np.concatenate([sample, np.array(uniform_patterns(P), dtype=np.int64)])
    rule = _transitions_vectorized(sample, P) <= 2
    ok &= bool(np.array_equal(rule, table[sample] < P * (P - 1) + 2))
    ok &= len(uniform_patterns(P)) == P * (P - 1) + 2 == 554
    ok &= int(table.max()) + 1 == 555 and np.unique(table[table < 554]).size == 554
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30.0
    details.append(f"P=24: rule agrees on {sample.size} patterns, 554 closed form")
    assert criterion(3, "uniform-pattern combinatorics", ok, ", ".join(details) + f", {elapsed:.1f} s")


# -- 4 ------------------------------------------------------------------------


def test_gray_shift_invariance(criterion):
    rng = np.random.default_rng(4)
    differing = 0
    for _ in range(50):
        offset = int(rng.integers(1, 80))
        img = random_image(rng, high=256 - offset)
        shifted = Image(np.asarray(img.data) + np.uint8(offset))
        for a, b in zip(extract_all_scales(img), extract_all_scales(shifted)):
            differing += int(not np.array_equal(a, b))
    assert criterion(4, "gray-shift invariance", differing == 0, f"50 images x 3 scales, {differing} differ")


# -- 5 ------------------------------------------------------------------------


def _pair(g, s):
    return np.concatenate([g, s]), np.array([0] * len(g) + [1] * len(s))


def test_eer_oracle(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(1000):
        ng, ns = rng.integers(1, 50, size=2)
        g, s = rng.beta(2, 4, ng), rng.beta(4, 2, ns)
        if i % 3 == 0:
            g, s = np.round(g, 1), np.round(s, 1)
        worst = max(worst, abs(eer(_pair(g, s))[0] - eer_sweep(g, s)))
    perfect = eer(_pair([0.0, 0.1], [0.9, 1.0]))[0]
    same = eer(_pair([0.3] * 4, [0.3] * 7))[0]
    ok = worst <= 1e-12 and perfect == 0.0 and same == 0.5
    assert criterion(5, "EER oracle", ok, f"max deviation {worst:.1e}, separated {perfect}, identical {same}")


# -- 6 ------------------------------------------------------------------------


def test_cascade_schedule_and_stopping(criterion):
    rng = np.random.default_rng(6)
    n = 36
    y = np.arange(n) % 2
    scales = [(rng.normal(0, 1, (n, L)) + y[:, None] * 0.8).astype(np.float32) for L in (5, 7, 9)]
    val = [(rng.normal(0, 1, (12, L)) + (np.arange(12) % 2)[:, None] * 0.8).astype(np.float32) for L in (5, 7, 9)]
    yv = np.arange(12) % 2

    checks = {}
    # schedule and leakage over a long run driven by an always-improving metric
    trace = []
    counter = iter(range(100))
    cfg = CascadeConfig(n_trees=3, k_folds=3, patience=2, max_layers=7, seed=6, workers=1)
    model = train_cascade(scales, y, val, yv, cfg, metric=lambda a, b: next(counter), on_layer=trace.append)
    checks["schedule"] = [t.scale for t in trace] == [scale_index(k) for k in range(1, 8)] == [1, 2, 3, 1, 2, 3, 1]
    checks["widths"] = [t.input_width for t in trace] == [5, 7 + 16, 9 + 16, 5 + 16, 7 + 16, 9 + 16, 5 + 16]
    leak_free = True
    for t in trace:
        for cf in t.crossfits:
            covered = np.zeros(n, dtype=int)
            for tr, pr in zip(cf.fold_train_indices, cf.fold_predict_indices):
                leak_free &= not set(tr.tolist()) & set(pr.tolist())
                covered[pr] += 1
            leak_free &= bool((covered == 1).all())
        leak_free &= bool(np.array_equal(t.train_augmentation, np.concatenate([c.vectors for c in t.crossfits], 1)))
    checks["no leakage"] = leak_free
    checks["max_layers"] = model.n_layers == 7 <= cfg.max_layers

    # scripted stopping sequence
    seq = iter([0.80, 0.90, 0.90, 0.90, 0.95, 0.99])
    stopped = train_cascade(scales, y, val, yv, CascadeConfig(n_trees=3, patience=2, seed=6, workers=1),
                            metric=lambda a, b: next(seq))
    mon = ConvergenceMonitor(2, 12)
    mon_stops = [mon.update(v) for v in (0.80, 0.90, 0.90, 0.90)]
    checks["patience stop"] = (stopped.n_layers == 4 and stopped.best_layer == 2
                               and mon_stops == [False, False, False, True] and mon.best_layer == 2)
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    assert criterion(6, "cascade schedule and stopping", ok,
                     "stop after layer 4, best layer 2" if ok else f"failed: {failed}")


# -- 7 ------------------------------------------------------------------------


def _pipeline(root, workers):
    ds = root / "ds"
    assert main(["synth", str(ds), "--n-per-class", "60", "--seed", "11"]) == 0
    common = ["--workers", str(workers)]
    assert main(["extract", str(ds / "manifest.csv"), str(root / "f.bin"), *common]) == 0
    assert main(["train", str(root / "f.bin"), str(ds / "manifest.csv"), str(root / "model"),
                 "--trees", "8", "--seed", "5", *common]) == 0
    assert main(["eval", str(root / "f.bin"), str(ds / "manifest.csv"), str(root / "rep"),
                 "--model", str(root / "model"), *common]) == 0
    return json.loads((root / "rep" / "report.json").read_text())


def test_determinism(criterion, tmp_path):
    a = _pipeline(tmp_path / "a", workers=1)
    b = _pipeline(tmp_path / "b", workers=2)
    same_data = tree_digest(tmp_path / "a" / "ds") == tree_digest(tmp_path / "b" / "ds")
    same_cache = (tmp_path / "a" / "f.bin").read_bytes() == (tmp_path / "b" / "f.bin").read_bytes()
    same_model = tree_digest(tmp_path / "a" / "model") == tree_digest(tmp_path / "b" / "model")
    ea = a["methods"]["LBP cascade (HSV)"]["eer"]
    eb = b["methods"]["LBP cascade (HSV)"]["eer"]
    same_report = (tmp_path / "a" / "rep" / "report.json").read_bytes() == (tmp_path / "b" / "rep" / "report.json").read_bytes()
    ok = same_data and same_cache and same_model and ea == eb and same_report
    assert criterion(7, "determinism across runs and worker counts", ok,
                     f"data {same_data}, cache {same_cache}, model {same_model}, EER {ea} vs {eb}")


# -- 8 and 9: the frozen synthetic benchmark ----------------------------------------


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    start = time.perf_counter()
    assert main(["synth", str(root / "ds"), "--n-per-class", "200", "--seed", "7"]) == 0
    manifest = root / "ds" / "manifest.csv"
    assert main(["extract", str(manifest), str(root / "f.bin"), "--color-space", "HSV"]) == 0
    return root, manifest, root / "f.bin", time.perf_counter() - start


def _method(report_dir, name):
    return json.loads((report_dir / "report.json").read_text())["methods"][name]


@pytest.mark.slow
def test_synthetic_benchmark(criterion, benchmark):
    root, manifest, cache, prep = benchmark
    start = time.perf_counter()
    assert main(["train", str(cache), str(manifest), str(root / "lbp"), "--trees", "64", "--seed", "7",
                 "--protocol", "holdout"]) == 0
    assert main(["eval", str(cache), str(manifest), str(root / "lbp_rep"), "--model", str(root / "lbp")]) == 0
    elapsed = prep + time.perf_counter() - start
    rep = _method(root / "lbp_rep", "LBP cascade (HSV)")
    ok = rep["eer"] <= 0.05 and rep["n_genuine"] == rep["n_spoof"] == 100 and elapsed <= 600
    assert criterion(8, "synthetic end-to-end benchmark", ok,
                     f"EER {100 * rep['eer']:.2f}% (bound 5%), HTER {100 * rep['hter']:.2f}%, {elapsed:.0f} s")


@pytest.mark.slow
def test_gsm_baseline(criterion, benchmark):
    root, manifest, cache, _ = benchmark
    lengths = tuple(gsm_length(w, s) for w, s in ((16, 8), (32, 16), (64, 32)))
    assert main(["train", str(cache), str(manifest), str(root / "both"), "--trees", "64", "--seed", "7",
                 "--gsm"]) == 0
    assert main(["eval", str(cache), str(manifest), str(root / "both_rep"), "--model", str(root / "both")]) == 0
    lbp = _method(root / "both_rep", "LBP cascade (HSV)")["eer"]
    gsm = _method(root / "both_rep", "GSM cascade (HSV)")["eer"]
    ok = lengths == (900, 196, 36) and lbp <= gsm
    assert criterion(9, "GSM baseline shape and ordering", ok,
                     f"lengths {lengths}, LBP EER {100 * lbp:.2f}% <= GSM EER {100 * gsm:.2f}%")


# -- 10 -----------------------------------------------------------------------


def test_probability_simplex(criterion):
    rng = np.random.default_rng(10)
    worst, negative = 0.0, False
    X = rng.normal(0, 1, (120, 6))
    y = (X[:, 0] + 0.5 * rng.normal(size=120) > 0).astype(int)
    probe = rng.normal(0, 3, (10**4, 6))
    for kind in ForestKind:
        for seed in range(2):
            p = train_forest(X, y, kind, 16, seed, workers=1).predict_proba(probe)
            worst = max(worst, float(np.abs(p.sum(axis=1) - 1).max()))
            negative |= bool((p < 0).any())
    scales = [X[:, :2], X[:, 2:4], X[:, 4:]]
    model = train_cascade(scales, y, scales, y, CascadeConfig(n_trees=8, max_layers=4, seed=3, workers=1))
    p = model.predict_proba([probe[:, :2], probe[:, 2:4], probe[:, 4:]])
    worst = max(worst, float(np.abs(p.sum(axis=1) - 1).max()))
    negative |= bool((p < 0).any())
    layer_means = model.layer_probas([probe[:, :2], probe[:, 2:4], probe[:, 4:]], upto=model.n_layers)
    for m in layer_means:
        worst = max(worst, float(np.abs(m.sum(axis=1) - 1).max()))
    ok = worst <= 1e-9 and not negative
    assert criterion(10, "probability simplex", ok, f"4 forests + cascade over 10^4 inputs, max |sum-1| {worst:.1e}")
