"""Command-line workflow: synth, extract, train-relevance, train-condition, predict, evaluate, regress.

Every command persists its artifacts under ``--out`` and embeds the config
hash and seed in them, so each stage can be re-run from the files of the
previous one.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from . import aggregation, classifier, dataset, descriptor, evaluation, imaging, regression, selection, synth
from .config import PipelineConfig, load_config, parse_assignments
from .dataset import ConditionClass

log = logging.getLogger("bcond")


class CommandError(RuntimeError):
    pass


# ----------------------------------------------------------------- utilities

def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_rows(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _image_jobs(records, root: str):
    """(image_id, path, record) per image; image_id is ``{house_id}_{index}``."""
    for rec in records:
        for j, rel in enumerate(rec.image_paths):
            yield f"{rec.house_id}_{j}", os.path.join(root, rel), rec


def _map(fn, items: Sequence, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(item) for item in items]


def _select_job(args):
    image_id, path, sel_cfg, relevance_path, relevance_classes, keep = args
    model = classifier.load_model(relevance_path, relevance_classes) if relevance_path else None
    img = imaging.load_gray(path)
    cfg = selection.SelectionConfig(sel_cfg.scales, sel_cfg.stride_fraction, sel_cfg.k, sel_cfg.t,
                                    sel_cfg.seed, sel_cfg.max_side, keep)
    return selection.select_pipeline(img, cfg, image_id, model)


def _split_records(manifest: str, cfg: PipelineConfig):
    records = dataset.parse_manifest(manifest)
    if records and all(r.split is not None for r in records):
        return records
    return dataset.partition(records, cfg.split_ratios, cfg.seed).labelled()


# ------------------------------------------------------------------ commands

def cmd_synth(cfg: PipelineConfig, args) -> None:
    counts = tuple(int(v) for v in args.counts.split(","))
    records = synth.synth_generate(args.out, counts, args.image_size, cfg.seed, args.images_per_house)
    if not records:
        dataset.write_manifest(os.path.join(args.out, "manifest.json"), [])
    payload = {"counts": list(counts), "image_size": args.image_size, "n_houses": len(records)}
    if args.relevance_per_class:
        synth.write_relevance_set(os.path.join(args.out, "relevance"), args.relevance_per_class,
                                  seed=cfg.seed, classes=cfg.relevance_classes)
        payload["relevance_per_class"] = args.relevance_per_class
    _write_json(os.path.join(args.out, "synth.json"), {**payload, **cfg.provenance()})


PATCH_META = ["house_id", "split", "label", "png"]


def cmd_extract(cfg: PipelineConfig, args) -> None:
    root = os.path.dirname(os.path.abspath(args.manifest))
    records = _split_records(args.manifest, cfg)
    split_path = os.path.join(args.out, "splits.json")
    # image paths stay relative to the source manifest
    rel = os.path.relpath(root, os.path.abspath(args.out))
    dataset.write_manifest(split_path, [dataset.BuildingRecord(
        r.house_id, tuple(os.path.normpath(os.path.join(rel, p)) for p in r.image_paths),
        r.category, r.year_built, r.retained_value, r.split) for r in records])

    jobs = list(_image_jobs(records, root))
    keep = bool(args.dump_patches)
    work = [(iid, path, cfg.selection, args.relevance_model, cfg.relevance_classes, keep) for iid, path, _ in jobs]
    results = _map(_select_job, work, args.workers)

    dump_dir = os.path.join(args.out, "patches")
    if keep:
        os.makedirs(dump_dir, exist_ok=True)
    n_total = 0
    with open(os.path.join(args.out, "patches.csv"), "w", newline="", encoding="utf-8") as fh:
        for line in cfg.preamble():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(PATCH_META + descriptor.CSV_HEADER)
        for (iid, _, rec), patches in zip(jobs, results):
            for p in patches:
                png = ""
                if keep:
                    png = f"patches/{p.spec.key}.png"
                    imaging.save_gray(os.path.join(args.out, png), p.pixels)
                w.writerow([rec.house_id, rec.split, rec.condition.name, png] + descriptor.descriptor_row(p))
                n_total += 1
    _write_json(os.path.join(args.out, "extract.json"),
                {"n_images": len(jobs), "n_patches": n_total, "relevance_model": args.relevance_model,
                 **cfg.provenance()})
    log.info("extracted %d patches from %d images", n_total, len(jobs))


def _sidecar(model_path: str, cfg: PipelineConfig, model, extra: dict) -> None:
    _write_json(model_path + ".json", {"classes": list(model.classes), "mode": model.mode,
                                       "loss_trace": list(model.loss_trace), **extra, **cfg.provenance()})


def cmd_train_relevance(cfg: PipelineConfig, args) -> None:
    index = args.patches if args.patches.endswith(".csv") else os.path.join(args.patches, "index.csv")
    root = os.path.dirname(os.path.abspath(index))
    classes = list(cfg.relevance_classes)
    patches, labels = [], []
    for row in _read_rows(index):
        if row["label"] not in classes:
            raise CommandError(f"unknown relevance label {row['label']!r}")
        pix = imaging.load_gray(os.path.join(root, row["file"]))
        patches.append(descriptor.PatchRecord(imaging.PatchSpec(row["file"], 0, 0, pix.shape[0]),
                                              descriptor.describe_pixels(pix), pix))
        labels.append(classes.index(row["label"]))
    model = selection.train_relevance(patches, labels, cfg.train, classes, cfg.feature_mode)
    path = os.path.join(args.out, "relevance.bcnd")
    classifier.save_model(model, path)
    _sidecar(path, cfg, model, {"n_patches": len(patches)})


def _read_patch_csv(path: str, with_pixels: bool = False):
    root = os.path.dirname(os.path.abspath(path))
    out = []
    for row in _read_rows(path):
        rec = descriptor.record_from_row(row)
        if with_pixels:
            if not row.get("png"):
                raise CommandError("augmentation or pixel features need patch crops; re-run extract with --dump-patches")
            rec = descriptor.PatchRecord(rec.spec, rec.descriptor, imaging.load_gray(os.path.join(root, row["png"])))
        out.append((row, rec))
    return out


def cmd_train_condition(cfg: PipelineConfig, args) -> None:
    need_pixels = cfg.augment_factor > 1 or cfg.feature_mode == "pixels"
    rows = [(row, rec) for row, rec in _read_patch_csv(args.patches, need_pixels) if row["split"] == args.split]
    if not rows:
        raise CommandError(f"no patches in split {args.split!r}")
    model = classifier.train([rec for _, rec in rows], [row["label"] for row, _ in rows], cfg.train,
                             cfg.augment_factor, cfg.feature_mode)
    path = os.path.join(args.out, "condition.bcnd")
    classifier.save_model(model, path)
    _sidecar(path, cfg, model, {"n_patches": len(rows), "split": args.split})


def cmd_predict(cfg: PipelineConfig, args) -> None:
    records = dataset.parse_manifest(args.manifest)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
    root = os.path.dirname(os.path.abspath(args.manifest))
    jobs = list(_image_jobs(records, root))
    model = classifier.load_model(args.model)
    need_pixels = model.mode == "pixels"
    if args.patches:
        by_image: dict[str, list] = {}
        for row, rec in _read_patch_csv(args.patches, need_pixels):
            by_image.setdefault(rec.spec.image_id, []).append(rec)
        selected = [by_image.get(iid, []) for iid, _, _ in jobs]
    else:
        work = [(iid, path, cfg.selection, args.relevance_model, cfg.relevance_classes, need_pixels)
                for iid, path, _ in jobs]
        selected = _map(_select_job, work, args.workers)

    preds = []
    with open(os.path.join(args.out, "patch_predictions.csv"), "w", newline="", encoding="utf-8") as fh:
        for line in cfg.preamble():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["image_id", "x", "y", "side", "truth", "p_A", "p_B", "p_C"])
        for (iid, _, rec), patches in zip(jobs, selected):
            probs = model.predict_proba(patches)
            for p, row in zip(patches, probs):
                w.writerow([iid, p.spec.x, p.spec.y, p.spec.side, rec.condition.name, *map(repr, map(float, row))])
            for method in aggregation.METHODS:
                preds.append(aggregation.aggregate(iid, probs, method, cfg.ambiguity_threshold))
    aggregation.write_report(os.path.join(args.out, "predictions.csv"), preds, cfg.preamble())
    log.info("predicted %d images", len(jobs))


def _verdicts(pred_rows: list[dict]) -> dict[tuple[str, str], ConditionClass | None]:
    out = {}
    for row in pred_rows:
        v = row["verdict"]
        out[(row["image_id"], row["method"])] = None if v == aggregation.UNDECIDABLE else ConditionClass.parse(v)
    return out


def _image_table(manifest: str, predictions: str):
    """Per predicted image: record, MV verdict, LH verdict."""
    records = dataset.parse_manifest(manifest)
    verdicts = _verdicts(aggregation.read_report(predictions))
    table = []
    for rec in records:
        for j in range(len(rec.image_paths)):
            iid = f"{rec.house_id}_{j}"
            if (iid, "MV") in verdicts:
                table.append((rec, verdicts[(iid, "MV")], verdicts.get((iid, "LH"))))
    return table


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    table = _image_table(args.manifest, args.predictions)
    if not table:
        raise CommandError("no predicted images match the manifest")
    truth = [rec.condition for rec, _, _ in table]
    mv = [m for _, m, _ in table]
    lh = [l for _, _, l in table]
    ages = [cfg.reference_year - rec.year_built for rec, _, _ in table]
    metrics = evaluation.metrics_report(truth, mv, lh, ages)
    _write_json(os.path.join(args.out, "metrics.json"), {**metrics, **cfg.provenance()})
    bars = evaluation.discount_bars([rec.retained_value for rec, _, _ in table], truth, mv, lh)
    evaluation.write_bars_csv(os.path.join(args.out, "discount_bars.csv"), bars, cfg.preamble())

    patch_file = args.patch_predictions or os.path.join(os.path.dirname(os.path.abspath(args.predictions)),
                                                        "patch_predictions.csv")
    if os.path.exists(patch_file):
        outcomes = [evaluation.PatchOutcome(f"{r['image_id']}_{r['x']}_{r['y']}_{r['side']}",
                                            ConditionClass.parse(r["truth"]),
                                            (float(r["p_A"]), float(r["p_B"]), float(r["p_C"])))
                    for r in _read_rows(patch_file)]
        ex = evaluation.confidence_rank(outcomes, args.confidence, n_ambiguous=args.n_ambiguous)

        def ids(items):
            return [{"patch": o.patch_id, "truth": o.truth.name, "likelihoods": list(o.likelihoods)} for o in items]

        _write_json(os.path.join(args.out, "exemplars.json"), {
            "threshold": args.confidence,
            "confident": {c.name: ids(v) for c, v in ex.confident.items()},
            "ambiguous": ids(ex.ambiguous),
            "non_neighbor": ids(ex.non_neighbor),
            **cfg.provenance()})


def cmd_regress(cfg: PipelineConfig, args) -> None:
    if args.predictions:
        table = [(rec, m, l) for rec, m, l in _image_table(args.manifest, args.predictions)
                 if m is not None and l is not None]
    else:
        table = [(rec, None, None) for rec in dataset.parse_manifest(args.manifest)]
    table = [t for t in table if t[0].retained_value is not None]
    if not table:
        raise CommandError("no regression response available")
    years = [rec.year_built for rec, _, _ in table]
    values = [rec.retained_value for rec, _, _ in table]
    truth = [rec.condition for rec, _, _ in table]
    sources = {"True": truth}
    if args.predictions:
        sources["MV"] = [m for _, m, _ in table]
        sources["LH"] = [l for _, _, l in table]
    fits, failed = {}, {}
    for name, labels in sources.items():
        try:
            fits[name] = regression.ols_fit(*regression.build_design(zip(years, labels, values)))
        except regression.SingularDesignError as exc:
            # a predicted labelling that never uses some class cannot be estimated; the
            # appraiser model must be
            if name == "True":
                raise
            log.warning("%s model not estimable: %s", name, exc)
            failed[name] = str(exc)
    with open(os.path.join(args.out, "regression.txt"), "w", encoding="utf-8") as fh:
        for line in cfg.preamble():
            fh.write(f"# {line}\n")
        fh.write(regression.format_table(fits))
        for name, msg in failed.items():
            fh.write(f"{name}: not estimable ({msg})\n")
    _write_json(os.path.join(args.out, "regression.json"),
                {"fits": {k: v.to_dict() for k, v in fits.items()}, "not_estimable": failed, **cfg.provenance()})


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train-relevance": cmd_train_relevance,
    "train-condition": cmd_train_condition,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "regress": cmd_regress,
}


# -------------------------------------------------------------------- parser

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="key=value config file")
    parser.add_argument("--seed", type=int, default=d)
    parser.add_argument("--workers", type=int, default=argparse.SUPPRESS if suppress else 1)
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else ".")
    parser.add_argument("--set", action="append", default=argparse.SUPPRESS if suppress else [],
                        metavar="KEY=VALUE", help="override one config value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcond", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic facade dataset")
    p.add_argument("--counts", default="100,100,100", help="houses per class A,B,C")
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--images-per-house", type=int, default=1)
    p.add_argument("--relevance-per-class", type=int, default=0, help="also write a labelled relevance patch set")

    p = sub.add_parser("extract", parents=[common], help="split houses and select patches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--relevance-model")
    p.add_argument("--dump-patches", action="store_true", help="write PNG crops of the selected patches")

    p = sub.add_parser("train-relevance", parents=[common], help="train the building/non-building patch model")
    p.add_argument("--patches", required=True, help="directory with index.csv (file,label) or the index itself")

    p = sub.add_parser("train-condition", parents=[common], help="train the patch condition model")
    p.add_argument("--patches", required=True, help="patches.csv from extract")
    p.add_argument("--split", default="training")

    p = sub.add_parser("predict", parents=[common], help="building-level predictions")
    p.add_argument("--manifest", required=True, help="splits.json from extract")
    p.add_argument("--model", required=True)
    p.add_argument("--relevance-model")
    p.add_argument("--patches", help="reuse selected patches from extract instead of re-running selection")
    p.add_argument("--split", default="test", help="split to predict, or 'all'")

    p = sub.add_parser("evaluate", parents=[common], help="confusion matrices and metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--patch-predictions")
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--n-ambiguous", type=int, default=20)

    p = sub.add_parser("regress", parents=[common], help="condition discount regression")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", help="predictions.csv; without it only the appraiser model is fitted")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("BCOND_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        overrides = parse_assignments(args.set, "--set")
        overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
