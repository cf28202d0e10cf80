"""``lbpforest`` command-line front end.

Commands::

    lbpforest synth   OUT_DIR [--n-per-class N] [--seed S]
    lbpforest extract MANIFEST CACHE [--color-space C] [--workers W]
    lbpforest train   CACHE MANIFEST MODEL_DIR [training flags] [--gsm]
    lbpforest eval    CACHE MANIFEST REPORT_DIR [--model MODEL_DIR] [--protocol P] [--aggregate A]
    lbpforest score   MODEL_DIR IMAGE

Every command accepts ``--config FILE`` (``key = value`` lines); flags given
on the command line override the file.  Exit status is 0 on success, 2 on
bad input and 3 when the data cannot support training or evaluation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, pipeline, synth
from .cascade import CascadeModel
from .config import DatasetManifest, ManifestError, RunConfig, read_config_file, read_manifest
from .evaluation import EvalReport, evaluate, format_table
from .features import extract_all_scales, read_cache, write_cache
from .forest import DegenerateDataError, default_workers
from .imagio import ColorSpace, ImageError, load_image, prepare

log = logging.getLogger("lbpforest")

EXIT_OK, EXIT_BAD_INPUT, EXIT_DEGENERATE = 0, 2, 3
RUN_FORMAT = "lbpforest.run"
REPORT_FORMAT = "lbpforest.report"

# flag dest -> RunConfig field
_CONFIG_FLAGS = {
    "color_space": "color_space", "trees": "trees", "folds": "folds", "patience": "patience",
    "max_layers": "max_layers", "seed": "seed", "aggregate": "aggregate", "gsm": "gsm",
    "protocol": "protocol", "test_fold": "test_fold", "workers": "workers",
}


class UsageError(Exception):
    """Bad input detected after argument parsing."""


def resolve_config(args, base: dict | None = None) -> RunConfig:
    """Defaults, then ``base`` (e.g. a stored run), then ``--config``, then explicit flags."""
    values = dict(base or {})
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for dest, name in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[name] = value
    return RunConfig.from_mapping(values)


def _workers(cfg: RunConfig) -> int:
    return cfg.workers or default_workers()


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_inputs(cache_path, manifest_path):
    manifest = read_manifest(manifest_path)
    cache = read_cache(cache_path)
    if cache.n_samples != len(manifest):
        raise UsageError(f"cache holds {cache.n_samples} rows but manifest lists {len(manifest)}")
    return cache, manifest


def _split(manifest: DatasetManifest, cfg: RunConfig):
    """(train rows, test rows) for the holdout protocol.

    A manifest without any fold values is used whole on both sides, so a
    separate test manifest can be evaluated against a model trained elsewhere.
    """
    if all(r.fold is None for r in manifest.records):
        every = np.arange(len(manifest))
        return every, every
    return pipeline.holdout_rows(manifest, cfg.test_fold)


def _groups(manifest: DatasetManifest, rows):
    return [manifest.records[i].group for i in rows]


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    path = synth.generate(args.out_dir, args.n_per_class, args.seed, args.size)
    print(path)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    manifest = read_manifest(args.manifest)
    scales = pipeline.extract_features(manifest, cfg.color_space, workers=_workers(cfg))
    meta = {
        "run_config": cfg.provenance(),
        "manifest_sha256": manifest.digest(),
        "images": [os.path.basename(r.path) for r in manifest.records],
        "lbpforest_version": __version__,
    }
    write_cache(args.cache, cfg.color_space, scales, meta)
    log.info("wrote %d rows to %s", len(manifest), args.cache)
    return EXIT_OK


def cmd_train(args) -> int:
    cache, manifest = _load_inputs(args.cache, args.manifest)
    stored = cache.metadata.get("run_config", {})
    cfg = resolve_config(args, {"color_space": stored.get("color_space", cache.space.value)})
    if ColorSpace.parse(cfg.color_space) is not cache.space:
        raise UsageError(f"cache was extracted in {cache.space.value}, not {cfg.color_space}")
    train_rows, _ = _split(manifest, cfg) if cfg.protocol == "holdout" else (np.arange(len(manifest)), None)
    labels = np.asarray(manifest.labels)
    subjects = np.asarray(manifest.subjects)
    inputs = {"cache_sha256": pipeline.file_digest(args.cache), "manifest_sha256": manifest.digest(),
              "train_rows": int(train_rows.size)}

    model = pipeline.fit_lbp(cache.subset(train_rows), labels[train_rows], subjects[train_rows],
                             _groups(manifest, train_rows), cfg)
    model.metadata.update(run_config=cfg.provenance(), inputs=inputs)
    os.makedirs(args.model_dir, exist_ok=True)
    model.save(os.path.join(args.model_dir, "cascade"))
    log.info("cascade: %d layers, best layer %d", model.n_layers, model.best_layer)

    if cfg.gsm:
        images = pipeline.load_prepared(manifest, cfg.color_space, train_rows, workers=_workers(cfg))
        gsm = pipeline.fit_gsm(images, labels[train_rows], subjects[train_rows], _groups(manifest, train_rows), cfg)
        gsm.cascade.metadata.update(run_config=cfg.provenance(), inputs=inputs)
        gsm.save(os.path.join(args.model_dir, "gsm"))

    _write_json(os.path.join(args.model_dir, "run.json"),
                {"format": RUN_FORMAT, "version": 1, "run_config": cfg.provenance(), "inputs": inputs,
                 "lbpforest_version": __version__})
    return EXIT_OK


def _method_name(kind: str, cfg: RunConfig) -> str:
    return f"{kind} ({cfg.color_space})"


def _eval_holdout(args, cfg, cache, manifest) -> dict[str, EvalReport]:
    if not args.model:
        raise UsageError("the holdout protocol needs --model")
    _, test_rows = _split(manifest, cfg)
    labels = np.asarray(manifest.labels)[test_rows]
    groups = _groups(manifest, test_rows)
    model = CascadeModel.load(os.path.join(args.model, "cascade"))
    scores = model.predict_score(cache.subset(test_rows))
    reports = {_method_name("LBP cascade", cfg): pipeline.report_for(model, scores, labels, groups, cfg.aggregate)}
    gsm_dir = os.path.join(args.model, "gsm")
    if os.path.isdir(gsm_dir):
        gsm = pipeline.TrainedGsm.load(gsm_dir)
        images = pipeline.load_prepared(manifest, cfg.color_space, test_rows, workers=_workers(cfg))
        g_scores = gsm.cascade.predict_score(gsm.representations(images))
        reports[_method_name("GSM cascade", cfg)] = pipeline.report_for(gsm.cascade, g_scores, labels, groups,
                                                                         cfg.aggregate)
    return reports


def _eval_kfold(cfg, cache, manifest) -> dict[str, EvalReport]:
    """Train and evaluate once per subject-disjoint fold; the top-level curve pools all folds."""
    labels = np.asarray(manifest.labels)
    subjects = np.asarray(manifest.subjects)
    kinds = ["LBP cascade"] + (["GSM cascade"] if cfg.gsm else [])
    pooled = {k: ([], [], []) for k in kinds}
    folds = {k: [] for k in kinds}
    images = pipeline.load_prepared(manifest, cfg.color_space, workers=_workers(cfg)) if cfg.gsm else None
    for f, (tr, te) in enumerate(pipeline.kfold_rows(manifest, 5, cfg.seed)):
        log.info("fold %d: %d train, %d test", f, tr.size, te.size)
        fitted = {"LBP cascade": pipeline.fit_lbp(cache.subset(tr), labels[tr], subjects[tr], _groups(manifest, tr), cfg)}
        test_scores = {"LBP cascade": fitted["LBP cascade"].predict_score(cache.subset(te))}
        if cfg.gsm:
            gsm = pipeline.fit_gsm([images[i] for i in tr], labels[tr], subjects[tr], _groups(manifest, tr), cfg)
            fitted["GSM cascade"] = gsm.cascade
            test_scores["GSM cascade"] = gsm.cascade.predict_score(gsm.representations([images[i] for i in te]))
        for k in kinds:
            rep = pipeline.report_for(fitted[k], test_scores[k], labels[te], _groups(manifest, te), cfg.aggregate)
            folds[k].append({"fold": f, "eer": rep.eer, "eer_threshold": rep.eer_threshold, "hter": rep.hter,
                             "hter_threshold": rep.hter_threshold, "n_test": int(te.size)})
            pooled[k][0].extend(test_scores[k].tolist())
            pooled[k][1].extend(labels[te].tolist())
            pooled[k][2].extend(_groups(manifest, te))
    out = {}
    for k in kinds:
        samples = pipeline.scored_samples(*pooled[k], cfg.aggregate)
        rep = evaluate(samples)
        rep.folds = folds[k]
        out[_method_name(k, cfg)] = rep
    return out


def cmd_eval(args) -> int:
    cache, manifest = _load_inputs(args.cache, args.manifest)
    base = {"color_space": cache.space.value}
    if args.model:
        with open(os.path.join(args.model, "run.json")) as fh:
            base = json.load(fh)["run_config"]
    cfg = resolve_config(args, base)
    if ColorSpace.parse(cfg.color_space) is not cache.space:
        raise UsageError(f"cache was extracted in {cache.space.value}, not {cfg.color_space}")
    if cfg.protocol == "kfold5":
        reports = _eval_kfold(cfg, cache, manifest)
    else:
        reports = _eval_holdout(args, cfg, cache, manifest)

    inputs = {"cache_sha256": pipeline.file_digest(args.cache), "manifest_sha256": manifest.digest()}
    if args.model and cfg.protocol == "holdout":
        inputs["model_sha256"] = pipeline.tree_digest(args.model)
    doc = {
        "format": REPORT_FORMAT, "version": 1, "protocol": cfg.protocol, "aggregate": cfg.aggregate,
        "run_config": cfg.provenance(), "inputs": inputs,
        "methods": {name: rep.to_dict() for name, rep in reports.items()},
    }
    os.makedirs(args.report_dir, exist_ok=True)
    _write_json(os.path.join(args.report_dir, "report.json"), doc)
    table = format_table(reports)
    with open(os.path.join(args.report_dir, "report.txt"), "w") as fh:
        fh.write(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_score(args) -> int:
    with open(os.path.join(args.model_dir, "run.json")) as fh:
        cfg = RunConfig.from_mapping(json.load(fh)["run_config"])
    model = CascadeModel.load(os.path.join(args.model_dir, "cascade"))
    scales = extract_all_scales(prepare(load_image(args.image), cfg.color_space))
    print(f"{float(model.predict_score(scales)):.6f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _run_flags(p: argparse.ArgumentParser, training: bool) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value defaults; flags override")
    p.add_argument("--color-space", choices=[c.value for c in ColorSpace])
    p.add_argument("--workers", type=int, help="worker threads (default: all cores)")
    if training:
        p.add_argument("--trees", type=int, help="trees per forest (default 500)")
        p.add_argument("--folds", type=int, help="cross-fitting folds per layer (default 3)")
        p.add_argument("--patience", type=int, help="layers without improvement before stopping (default 2)")
        p.add_argument("--max-layers", type=int, help="hard cap on cascade depth (default 12)")
        p.add_argument("--seed", type=int)
        p.add_argument("--gsm", action="store_const", const=True, help="also train the grained-scanning baseline")
        p.add_argument("--protocol", choices=["holdout", "kfold5"])
        p.add_argument("--test-fold", type=int, help="manifest fold held out by the holdout protocol (default 1)")
        p.add_argument("--aggregate", choices=["frame", "mean"], help="score frames or per-group means")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbpforest", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic genuine/recapture benchmark")
    p.add_argument("out_dir")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="compute the three LBP scale representations into a cache file")
    p.add_argument("manifest")
    p.add_argument("cache")
    _run_flags(p, training=False)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the cascade (and optionally the GSM baseline)")
    p.add_argument("cache")
    p.add_argument("manifest")
    p.add_argument("model_dir")
    _run_flags(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score test rows and write EER/HTER reports")
    p.add_argument("cache")
    p.add_argument("manifest")
    p.add_argument("report_dir")
    p.add_argument("--model", metavar="MODEL_DIR", help="trained model (holdout protocol)")
    _run_flags(p, training=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="print the spoof probability of one image")
    p.add_argument("model_dir")
    p.add_argument("image")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateDataError as exc:
        print(f"lbpforest: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (UsageError, ManifestError, ImageError, ValueError, KeyError, OSError) as exc:
        print(f"lbpforest: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
