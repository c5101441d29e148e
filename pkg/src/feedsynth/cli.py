"""Command-line entry point.

Subcommands: prep-data, stats, train, generate, evaluate, rank. One JSON
run-config drives train; the few flat flags override it. Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data as data_mod
from .data import (
    RecordError,
    corpus_stats,
    normalize_sample,
    parse_legacy_csv,
    parse_records,
    split_dataset,
    write_records,
)
from .evaluation import (
    encoder_embedding_provider,
    export_worksheet,
    file_embedding_provider,
    format_report,
    generate_feedback,
    report_to_csv,
    score_feedback,
)
from .model import ABLATIONS, ModelConfig
from .ranking import mrr, rank_feedback, recall_at_k
from .regions import load_region_features
from .training import TrainConfig, load_checkpoint, train

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class ConfigError(ValueError):
    """Run-config violation; message carries the offending field path."""


_RUN_CONFIG_KEYS = {
    "corpus", "region_features", "out_dir", "seed", "ablation", "split_mode", "model", "train",
}


def load_run_config(path: Path):
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _RUN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if "corpus" not in doc:
        raise ConfigError("missing required key: corpus")
    try:
        model_config = ModelConfig.from_dict(doc.get("model", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}")
    try:
        train_config = TrainConfig.from_dict(doc.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}")
    if "seed" in doc:
        if not isinstance(doc["seed"], int):
            raise ConfigError("seed: must be an integer")
        train_config.seed = doc["seed"]
    if "ablation" in doc:
        if doc["ablation"] not in ABLATIONS:
            raise ConfigError(f"ablation: must be one of {ABLATIONS}")
        train_config.ablation = doc["ablation"]
    if "split_mode" in doc:
        if doc["split_mode"] not in data_mod.SPLIT_MODES:
            raise ConfigError(f"split_mode: must be one of {data_mod.SPLIT_MODES}")
        train_config.split_mode = doc["split_mode"]
    return doc, model_config, train_config


def _require_readable(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} not readable: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_prep_data(args) -> int:
    src = Path(args.infile)
    if not src.is_file() or src.stat().st_size == 0:
        print(f"error: input not readable or empty: {src}", file=sys.stderr)
        return USAGE_ERROR
    if args.format == "auto":
        fmt = "legacy" if src.suffix.lower() == ".csv" else "records"
    else:
        fmt = args.format
    try:
        if fmt == "legacy":
            samples, errors = parse_legacy_csv(src, delimiter=args.delimiter)
        else:
            samples, errors = parse_records(src), []
    except (RecordError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    normalized = [normalize_sample(s) for s in samples]
    write_records(normalized, args.out)
    for message in errors:
        print(f"skipped {message}", file=sys.stderr)
    print(
        f"wrote {len(normalized)} records to {args.out} "
        f"({len(errors)} row(s) skipped)",
        file=sys.stderr,
    )
    return 0


def cmd_stats(args) -> int:
    samples = parse_records(_require_readable(Path(args.infile), "corpus"))
    if args.split:
        samples = split_dataset(samples, args.split)[args.split]
    stats = corpus_stats(samples)
    rows = [
        ("articles", f"{stats.n_articles}"),
        ("samples", f"{stats.n_samples}"),
        ("avg comments/article", f"{stats.avg_comments_per_article:.2f}"),
        ("avg likes/comment", f"{stats.avg_likes_per_comment:.2f}"),
        ("avg text words", f"{stats.avg_text_len_words:.2f}"),
        ("avg comment words", f"{stats.avg_comment_len_words:.2f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name.ljust(width)}  {value}")
    return 0


def _train_test_split(samples, train_config: TrainConfig):
    mode = train_config.split_mode
    seed = train_config.seed
    if mode == "all":
        return list(samples), []
    if mode == "holdout80_20":
        parts = split_dataset(samples, mode, seed)
        return parts["train"], parts["test"]
    if mode == "kfold5":
        parts = split_dataset(samples, mode, seed)
        test = parts[f"fold{train_config.fold_index}"]
        train_part = [
            s for name, fold in parts.items() for s in fold
            if name != f"fold{train_config.fold_index}"
        ]
        return train_part, test
    # low/mid/high: filter by comment range, then hold out 20% by article
    filtered = split_dataset(samples, mode, seed)[mode]
    if not filtered:
        return [], []
    parts = split_dataset(filtered, "holdout80_20", seed)
    return parts["train"], parts["test"]


def cmd_train(args) -> int:
    doc, model_config, train_config = load_run_config(Path(args.config))
    if args.seed is not None:
        train_config.seed = args.seed
    if args.epochs is not None:
        train_config.epochs = args.epochs
    if args.ablation is not None:
        train_config.ablation = args.ablation
    corpus_path = _require_readable(Path(doc["corpus"]), "corpus")
    regions = None
    if doc.get("region_features"):
        regions = load_region_features(_require_readable(Path(doc["region_features"]), "region features"))
    out_dir = Path(args.out or doc.get("out_dir") or "run_output")

    samples = parse_records(corpus_path)
    train_samples, test_samples = _train_test_split(samples, train_config)
    if not train_samples:
        print("error: training split is empty", file=sys.stderr)
        return RUNTIME_ERROR
    ckpt, log = train(train_samples, regions, model_config, train_config, out_dir=out_dir)
    write_records(test_samples, out_dir / "test.jsonl")
    print(f"trained {len(log.entries)} epoch(s); checkpoints in {out_dir}", file=sys.stderr)
    return 0


def _load_eval_inputs(args):
    ckpt = load_checkpoint(_require_readable(Path(args.ckpt), "checkpoint"))
    samples = parse_records(_require_readable(Path(args.infile), "corpus"))
    regions = None
    if args.regions:
        regions = load_region_features(_require_readable(Path(args.regions), "region features"))
    return ckpt, samples, regions


def cmd_generate(args) -> int:
    ckpt, samples, regions = _load_eval_inputs(args)
    feedbacks = generate_feedback(ckpt, samples, regions)
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps({"feedback": feedbacks[sample.id], "id": sample.id},
                                sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n")
    print(f"wrote feedback for {len(samples)} sample(s) to {args.out}", file=sys.stderr)
    return 0


def _provider_for(args, ckpt):
    if args.provider == "model-encoder":
        return encoder_embedding_provider(ckpt), "model-encoder"
    if args.provider.startswith("file:"):
        path = _require_readable(Path(args.provider[5:]), "embedding file")
        return file_embedding_provider(path), "external-file"
    raise ConfigError(f"provider must be 'model-encoder' or 'file:PATH', got {args.provider!r}")


def cmd_evaluate(args) -> int:
    ckpt, samples, regions = _load_eval_inputs(args)
    provider, tag = _provider_for(args, ckpt)
    ks = tuple(int(k) for k in args.ks.split(","))
    feedbacks = generate_feedback(ckpt, samples, regions)
    report = score_feedback(samples, feedbacks, provider, ks=ks)
    report_to_csv(report, args.report, tag)
    if args.worksheet:
        export_worksheet(samples, feedbacks, args.worksheet)
    print(format_report(report, tag))
    return 0


def cmd_rank(args) -> int:
    samples = parse_records(_require_readable(Path(args.infile), "corpus"))
    feedbacks = {}
    with open(_require_readable(Path(args.feedback_file), "feedback file"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                feedbacks[obj["id"]] = obj["feedback"]
    if args.provider == "model-encoder":
        if not args.ckpt:
            raise ConfigError("provider model-encoder needs --ckpt")
        ckpt = load_checkpoint(_require_readable(Path(args.ckpt), "checkpoint"))
        provider, tag = encoder_embedding_provider(ckpt), "model-encoder"
    else:
        provider, tag = _provider_for(args, None)
    ranks = []
    for sample in samples:
        if sample.id not in feedbacks:
            print(f"error: no feedback for sample {sample.id!r}", file=sys.stderr)
            return RUNTIME_ERROR
        rank, _ = rank_feedback(feedbacks[sample.id], sample.comments, provider)
        ranks.append(rank)
    ks = tuple(int(k) for k in args.ks.split(","))
    print(f"provider  {tag}")
    print(f"mrr       {mrr(ranks):.4f}")
    for k in ks:
        print(f"recall@{k}  {recall_at_k(ranks, k):.2f}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feedsynth",
        description="Train, run, and evaluate the multimodal feedback synthesizer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep-data", help="normalize a corpus into canonical records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delimiter", default=":", help="legacy CSV list delimiter")
    p.add_argument("--format", choices=("auto", "legacy", "records"), default="auto")
    p.set_defaults(fn=cmd_prep_data)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--split", choices=("low", "mid", "high"), default=None)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="greedy feedback for every sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--regions", default=None)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="generate and score against comments")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--regions", default=None)
    p.add_argument("--provider", default="model-encoder")
    p.add_argument("--ks", default="1,3,5,7")
    p.add_argument("--worksheet", default=None, help="also export a human-evaluation CSV")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("rank", help="like-rank existing feedback against comments")
    p.add_argument("--feedback-file", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--provider", default="model-encoder")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--ks", default="1,3,5,7")
    p.set_defaults(fn=cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # runtime failure: bad data, divergence, ...
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
