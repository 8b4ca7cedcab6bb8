"""Command-line entry point: preprocess, pretrain-classifier, train, generate, evaluate.

Exit status: 0 success, 2 usage error, 3 data error, 4 checkpoint error,
5 training failure.
"""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import TrainConfig, load_config
from .corpus import (
    PAD_RATING, ShardHeader, Vocabulary, build_examples, build_vocab, detokenize,
    ingest_with_stats, read_items, read_shard, split_items, tokenize, write_items, write_shard,
)
from .snippets import SnippetExtractor

log = logging.getLogger("reviewgen")

EXIT_USAGE, EXIT_DATA, EXIT_CHECKPOINT, EXIT_TRAIN = 2, 3, 4, 5
VARIANT_SYSTEM = {"full": "ours", "norating": "ours-norating", "seq2seq": "seq2seq"}


class DataError(Exception):
    pass


def _positive_rating(text: str) -> int:
    value = int(text)
    if not 1 <= value <= 5:
        raise argparse.ArgumentTypeError("rating must be an integer in 1..5")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default from config: 0)")
    common.add_argument("--config", help="key=value config file; flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="reviewgen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", parents=[common], help="raw reviews -> vocab + example shards")
    pre.add_argument("--data", help="raw JSONL reviews (default: bundled toy corpus)")
    pre.add_argument("--out", required=True, help="output directory")

    cls = sub.add_parser("pretrain-classifier", parents=[common], help="fit the rating classifier")
    cls.add_argument("--data", required=True, help="preprocessed directory")
    cls.add_argument("--out", required=True, help="classifier checkpoint path")

    tr = sub.add_parser("train", parents=[common], help="train the generator")
    tr.add_argument("--data", required=True, help="preprocessed directory")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--classifier", help="pretrained classifier checkpoint")
    tr.add_argument("--variant", choices=sorted(VARIANT_SYSTEM))
    tr.add_argument("--lambda", dest="lam", type=float)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--hidden", type=int, help="hidden and embedding width")
    tr.add_argument("--max-steps", type=int, help="stop after this many optimizer steps")

    gen = sub.add_parser("generate", parents=[common], help="answer a question about an item")
    gen.add_argument("--data", required=True, help="preprocessed directory")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--item", required=True)
    gen.add_argument("--question", required=True)
    gen.add_argument("--rating", type=_positive_rating, help="1..5; omit for an overall answer")
    gen.add_argument("--beam", type=int)
    gen.add_argument("--max-len", type=int)

    ev = sub.add_parser("evaluate", parents=[common], help="compare systems on the test shard")
    ev.add_argument("--data", required=True, help="preprocessed directory")
    ev.add_argument("--systems", default="random,nn-rating",
                    help="comma list of random, nn-rating, seq2seq, ours, ours-norating")
    ev.add_argument("--checkpoint", action="append", default=[],
                    help="model checkpoint; its variant decides the system name (repeatable)")
    ev.add_argument("--out", help="write per-(system, metric) JSONL records here")
    ev.add_argument("--split", default="test", choices=("train", "valid", "test"))
    ev.add_argument("--limit", type=int, help="evaluate only the first N examples")
    ev.add_argument("--beam", type=int)
    ev.add_argument("--max-len", type=int)
    return p


def resolve_config(args, base: TrainConfig | None = None) -> TrainConfig:
    overrides = {
        "seed": args.seed,
        "lam": getattr(args, "lam", None),
        "variant": getattr(args, "variant", None),
        "epochs": getattr(args, "epochs", None),
        "beam": getattr(args, "beam", None),
        "max_decode_len": getattr(args, "max_len", None),
    }
    hidden = getattr(args, "hidden", None)
    if hidden is not None:
        overrides.update(hidden=hidden, emb=hidden)
    if base is not None and args.config is None:
        cfg = base.replace(**{k: v for k, v in overrides.items() if v is not None})
    else:
        cfg = load_config(args.config, **overrides)
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def _load_prepared(data_dir):
    d = Path(data_dir)
    if not (d / "vocab.json").exists():
        raise DataError(f"{d}: not a preprocessed directory (run `reviewgen preprocess` first)")
    return d, Vocabulary.load(d / "vocab.json")


def _shard(d: Path, split: str):
    path = d / f"{split}.jsonl"
    if not path.exists():
        raise DataError(f"missing shard {path}")
    return read_shard(path)[1]


# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    from .synthetic import toy_corpus_path

    cfg = resolve_config(args)
    src = Path(args.data) if args.data else toy_corpus_path()
    if not src.exists():
        raise DataError(f"no such file: {src}")
    bundles, stats = ingest_with_stats(src, min_reviews=cfg.min_reviews)
    if not bundles:
        raise DataError(f"{src}: no item has at least {cfg.min_reviews} usable reviews")
    train, valid, test = split_items(bundles, seed=cfg.seed)
    vocab = build_vocab(train, min_freq=cfg.min_freq, max_size=cfg.max_vocab)
    extractor = SnippetExtractor(max_snippets=cfg.max_snippets, max_total_tokens=cfg.max_snippet_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.json")
    limits = {"max_reviews": cfg.max_reviews, "max_len": cfg.max_review_len}
    counts = {}
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        examples = [ex for b in part for ex in build_examples(
            b, extractor, cfg.max_reviews, cfg.max_review_len, cfg.seed)]
        write_shard(out / f"{name}.jsonl", examples,
                    ShardHeader(vocab.content_hash(), cfg.seed, dict(limits)))
        counts[name] = len(examples)
    write_items(out / "items.jsonl", bundles)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{len(bundles)} items ({stats.records} records, {stats.warnings} skipped), "
          f"vocab {len(vocab)}, examples {counts}")
    return 0


def cmd_pretrain_classifier(args) -> int:
    from .objective import ClassifierParams, pretrain_classifier
    from .trainer import save_classifier

    cfg = resolve_config(args)
    d, vocab = _load_prepared(args.data)
    # every train review is the target of exactly one example
    train = _shard(d, "train")
    seqs = [vocab.encode(ex.target.tokens) for ex in train]
    ratings = [ex.target.rating for ex in train]
    params = ClassifierParams(len(vocab), cfg.cls_emb, cfg.cls_hidden,
                              np.random.default_rng(cfg.seed), cfg.init_scale)
    report = pretrain_classifier(seqs, ratings, params, epochs=cfg.cls_epochs,
                                 lr=cfg.cls_learning_rate, seed=cfg.seed,
                                 max_len=cfg.max_review_len)
    save_classifier(args.out, params, vocab, report)
    print(f"held-out accuracy {report.accuracy:.4f} (majority baseline "
          f"{report.majority_accuracy:.4f}) on {report.n_heldout} sentences")
    return 0


def cmd_train(args) -> int:
    from .model import ReviewAnswerModel
    from .trainer import Trainer, load_classifier

    cfg = resolve_config(args)
    d, vocab = _load_prepared(args.data)
    train, valid = _shard(d, "train"), _shard(d, "valid")
    classifier = None
    if args.classifier:
        classifier = load_classifier(args.classifier, vocab)
    elif cfg.lam < 1.0:
        log.warning("no --classifier given: training with the generation loss only")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    model = ReviewAnswerModel(len(vocab), cfg.emb, cfg.hidden, np.random.default_rng(cfg.seed),
                              cfg.init_scale, cfg.variant)
    trainer = Trainer(model, cfg, vocab, classifier, log_path=out / "train_log.jsonl")
    result = trainer.fit(train, valid, out, max_steps=args.max_steps)
    if not (out / "best.ckpt").exists():
        trainer.save_model(out / "best.ckpt")
    if result.best_epoch < 0:
        summary = "no epoch completed, saved current weights"
    else:
        summary = f"best validation gen_loss {result.best_valid:.4f} (epoch {result.best_epoch})"
    print(f"{result.steps} steps; {summary}; checkpoint {out / 'best.ckpt'}")
    return 0


def cmd_generate(args) -> int:
    from .model import query_arrays
    from .trainer import load_model

    d, vocab = _load_prepared(args.data)
    items = read_items(d / "items.jsonl")
    if args.item not in items:
        near = difflib.get_close_matches(args.item, list(items), n=5, cutoff=0.0)
        raise DataError(f"unknown item {args.item!r}; nearest: {', '.join(near)}")
    model, train_cfg = load_model(args.checkpoint, vocab)
    cfg = resolve_config(args, base=train_cfg)
    bundle = items[args.item]
    reviews = [type(r)(r.item_id, r.tokens[:cfg.max_review_len], r.rating)
               for r in bundle.reviews[:cfg.max_reviews]]
    extractor = SnippetExtractor(max_snippets=cfg.max_snippets, max_total_tokens=cfg.max_snippet_len)
    snippets = extractor(tokenize(args.question))
    if not snippets:
        print("warning: no noun phrase found in the question; generating without snippets",
              file=sys.stderr)
    rating = PAD_RATING if args.rating is None else args.rating
    arrays = query_arrays(reviews, snippets, vocab, rating, args.item)
    answer = vocab.decode(model.generate(arrays, beam=cfg.beam, max_len=cfg.max_decode_len))
    print(f"snippets: {[' '.join(s) for s in snippets]}")
    print(f"rating: {'PAD' if rating == PAD_RATING else rating}")
    print(f"answer: {detokenize(answer)}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import SYSTEM_ORDER, evaluate_systems, model_system, nn_rating_system, random_system
    from .trainer import load_model

    cfg = resolve_config(args)
    d, vocab = _load_prepared(args.data)
    examples = _shard(d, args.split)
    if args.limit is not None:
        examples = examples[:args.limit]
    wanted = [s.strip() for s in args.systems.split(",") if s.strip()]
    unknown = [s for s in wanted if s not in SYSTEM_ORDER]
    if unknown:
        raise DataError(f"unknown systems {unknown}; choose from {list(SYSTEM_ORDER)}")
    models = {}
    for path in args.checkpoint:
        model, _ = load_model(path, vocab)
        models[VARIANT_SYSTEM[model.variant]] = model
    systems = {}
    for name in wanted:
        if name == "random":
            systems[name] = random_system(cfg.seed)
        elif name == "nn-rating":
            systems[name] = nn_rating_system(cfg.seed)
        elif name in models:
            systems[name] = model_system(models[name], vocab, cfg.beam, cfg.max_decode_len)
        else:
            raise DataError(f"system {name!r} needs a --checkpoint trained with that variant")
    report = evaluate_systems(examples, systems)
    print(report.table())
    if args.out:
        report.write_records(args.out)
    return 0


COMMANDS = {
    "preprocess": cmd_preprocess,
    "pretrain-classifier": cmd_pretrain_classifier,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    from .trainer import TrainingError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except checkpoint.CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingError as err:
        print(f"training error: {err}", file=sys.stderr)
        return EXIT_TRAIN
    except (DataError, OSError, ValueError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
