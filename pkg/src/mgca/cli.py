"""Command-line entry point: gen, splits, train, infer, eval.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import formats
from .errors import ConfigError, ContractError, MgcaError
from .evaluation import EvalConfig, evaluate, make_splits
from .model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from .pipeline import InferConfig, NmsConfig, TrainConfig, TrainVideo, infer_video, train, training_subset
from .synthdata import SynthConfig, generate_dataset
from .triage import TriageConfig

log = logging.getLogger("mgca")

MODEL_KEYS = ("d_fpn", "n_levels", "stem_convs", "head_width", "seed")
INFER_KEYS = ("lambda_retain", "lambda_base", "nms_threshold", "max_instances", "n_coarse", "tau",
              "use_conventional_classifier", "presence_source")


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = formats.read_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _section(cfg: dict, name: str, allowed) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return dict(sec)


def _echo(cfg: dict) -> None:
    print(json.dumps(cfg, indent=1, sort_keys=True))


def _pick_split(path, index: int):
    splits = formats.read_splits(path)
    if not 0 <= index < len(splits):
        raise ConfigError(f"split index {index} out of range (file has {len(splits)})")
    return splits[index]


def _subset_ids(af: formats.AnnotationFile, subset: str) -> list[str]:
    if subset == "all" or not af.subsets:
        return af.ids()
    ids = af.ids(subset)
    if not ids:
        raise ContractError(f"no videos in subset {subset!r}")
    return ids


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    raw = _load_config(args.config)
    if "synth" in raw:
        raw = raw["synth"]
    if args.seed is not None:
        raw = dict(raw, seed=args.seed)
    cfg = SynthConfig.from_dict(raw)
    if args.print_config:
        _echo(cfg.to_dict())
    corpus = generate_dataset(cfg)
    videos = ((v.video_id, v.subset, v.f_vid, v.f_img, v.annotations) for v in corpus.videos)
    formats.write_corpus(args.out, corpus.categories, corpus.templates, videos, {"generator": cfg.to_dict()})
    log.info("wrote %d videos to %s", len(corpus.videos), args.out)
    return 0


def _read_categories(path) -> list[str]:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        return [line.strip() for line in text.splitlines() if line.strip()]
    if isinstance(d, dict) and "categories" in d:
        return [str(c) for c in d["categories"]]
    if isinstance(d, list):
        return [str(c) for c in d]
    raise ContractError(f"{path}: expected a category list")


def cmd_splits(args) -> int:
    cats = _read_categories(args.categories)
    if len(set(cats)) != len(cats):
        raise ContractError("duplicate category names")
    splits = make_splits(cats, args.fraction, args.seeds, seed=args.seed if args.seed is not None else 0)
    formats.write_splits(args.out, splits)
    return 0


def cmd_train(args) -> int:
    raw = _load_config(args.config)
    model_kw = _section(raw, "model", MODEL_KEYS)
    train_kw = _section(raw, "train", TrainConfig.__dataclass_fields__)
    if args.seed is not None:
        model_kw["seed"] = args.seed
        train_kw["seed"] = args.seed
    corpus = formats.read_corpus(args.data)
    split = _pick_split(args.split, args.split_index)
    tcfg = TrainConfig(**train_kw)

    ids = _subset_ids(corpus.annotations, args.subset)
    videos = []
    for vid in ids:
        f_vid, f_img = corpus.features(vid)
        videos.append(TrainVideo(vid, f_vid, f_img, corpus.annotations.videos[vid]))
    if not videos:
        raise ContractError("no training videos")
    dataset = training_subset(videos, split.base)
    mcfg = ModelConfig(d_vid=videos[0].f_vid.cols, d_img=videos[0].f_img.cols, n_base=len(split.base), **model_kw)
    if args.print_config:
        _echo({"model": mcfg.to_dict(), "train": asdict(tcfg)})
    log.info("training on %d of %d videos (base-only)", len(dataset), len(videos))
    params = init_params(mcfg)
    history = train(dataset, params, corpus.text.subset(split.base), tcfg)
    meta = {
        "split": split.to_dict(),
        "train": asdict(tcfg),
        "history": [h.as_dict() for h in history],
        "n_train_videos": len(dataset),
    }
    save_checkpoint(args.out, params, meta)
    return 0


def _infer_config(raw: dict) -> InferConfig:
    kw = _section(raw, "infer", INFER_KEYS)
    tri = TriageConfig(kw.pop("lambda_retain", 0.5), kw.pop("lambda_base", 0.5))
    nms = NmsConfig(kw.pop("nms_threshold", 0.5), kw.pop("max_instances", 200))
    return InferConfig(tri, nms, **kw)


def cmd_infer(args) -> int:
    icfg = _infer_config(_load_config(args.config))
    if args.print_config:
        _echo({"infer": asdict(icfg)})
    corpus = formats.read_corpus(args.data)
    split = _pick_split(args.split, args.split_index)
    params, meta = load_checkpoint(args.ckpt)
    trained = meta.get("split", {}).get("base")
    if trained is not None and list(trained) != list(split.base):
        raise ContractError("checkpoint was trained on a different base vocabulary than the chosen split")
    novel_bank = corpus.text.subset(split.novel)
    all_bank = corpus.text.subset(split.all)
    preds = {}
    for vid in _subset_ids(corpus.annotations, args.subset):
        f_vid, f_img = corpus.features(vid)
        preds[vid] = infer_video(f_vid, f_img, params, split.base, novel_bank, icfg, all_bank).predictions
    formats.write_json(args.out, formats.predictions_to_json(preds, split.seed))
    return 0


def cmd_eval(args) -> int:
    af = formats.read_annotations(args.gt)
    splits = formats.read_splits(args.split)
    by_seed = {s.seed: s for s in splits}
    ecfg = EvalConfig.from_style(args.style)
    reports = []
    for i, path in enumerate(args.preds):
        preds, seed = formats.predictions_from_json(formats.read_json(path))
        if seed is None:
            split = _pick_split(args.split, args.split_index if len(args.preds) == 1 else i)
        elif seed in by_seed:
            split = by_seed[seed]
        else:
            raise ContractError(f"{path}: split seed {seed} not found in {args.split}")
        ids = _subset_ids(af, args.subset)
        extra = set(preds) - set(ids)
        if extra:
            raise ContractError(f"{path}: predictions for videos outside the evaluated set: {sorted(extra)[:3]}")
        gts = {vid: af.videos[vid] for vid in ids}
        rep = evaluate({vid: preds.get(vid, []) for vid in ids}, gts, split, ecfg)
        reports.append((split.seed, rep))

    n = len(reports)
    out = {
        "style": ecfg.style,
        "tiou_grid": [f"{t:.2f}" for t in ecfg.tiou_grid],
        "map_base": sum(r.map_base for _, r in reports) / n,
        "map_novel": sum(r.map_novel for _, r in reports) / n,
        "map_all": sum(r.map_all for _, r in reports) / n,
        "splits": [dict(r.to_json(), split_seed=s) for s, r in reports],
    }
    formats.write_json(args.out, out)
    if args.csv:
        formats.write_results_csv(args.csv, [(s, r.map_base, r.map_novel, r.map_all) for s, r in reports])
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgca", description="Open-vocabulary temporal action localization")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        if config:
            sp.add_argument("--config", default=None, help="JSON config file")
            sp.add_argument("--print-config", action="store_true", help="echo the effective config to stdout")

    g = sub.add_parser("gen", help="generate a synthetic corpus")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("splits", help="write seeded base/novel category splits")
    common(s, config=False)
    s.add_argument("--categories", required=True, help="annotations/corpus JSON or one name per line")
    s.add_argument("--fraction", type=float, default=0.75)
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_splits)

    t = sub.add_parser("train", help="train a model on the base categories of one split")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--split", required=True)
    t.add_argument("--split-index", type=int, default=0)
    t.add_argument("--subset", default="train")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict instances for a corpus subset")
    common(i)
    i.add_argument("--data", required=True)
    i.add_argument("--ckpt", required=True)
    i.add_argument("--split", required=True)
    i.add_argument("--split-index", type=int, default=0)
    i.add_argument("--subset", default="test")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    common(e, config=False)
    e.add_argument("--preds", required=True, nargs="+")
    e.add_argument("--gt", required=True)
    e.add_argument("--split", required=True)
    e.add_argument("--split-index", type=int, default=0)
    e.add_argument("--subset", default="test")
    e.add_argument("--style", choices=("thumos", "anet"), default="thumos")
    e.add_argument("--out", required=True)
    e.add_argument("--csv", default=None, help="also write split_seed,map_base,map_novel,map_all rows")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MgcaError, OSError, ValueError) as exc:
        print(f"mgca {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
