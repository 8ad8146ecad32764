"""Single-binary pipeline: mine, stats, prepare, train, summarize, evaluate.

Every subcommand is deterministic given its inputs and configuration.  Exit
codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Configuration is a flat JSON document; command-line flags override file
values, and unknown keys are rejected by name.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import model
from .autodiff import AutodiffError
from .corpus import (
    CorpusFormatError,
    SplitSpec,
    deduplicate,
    filter_by_length,
    length_histogram,
    load_jsonl,
    save_jsonl,
    split,
)
from .gitmine import MiningConfig, MiningError, mine_repository
from .metrics import (
    evaluate_corpus,
    format_report_table,
    report_to_json,
    write_comparison_csv,
)
from .vocab import Vocabulary


class ConfigError(ValueError):
    """Bad configuration file, key, or value."""


CONFIG_DEFAULTS: dict = {
    # mining
    "max_commits": None,
    "include_extensions": [".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp"],
    "skip_merge_commits": True,
    "dedup_mode": "none",
    # preparation
    "max_source_tokens": None,
    "max_target_tokens": None,
    "train_frac": 0.8,
    "val_frac": 0.1,
    "test_frac": 0.1,
    # tokenizer
    "vocab_mode": "word",
    "vocab_size": 20000,
    # model
    "embed_dim": 128,
    "hidden_dim": 256,
    "attn_dim": 128,
    "num_layers": 2,
    "learning_rate": 1e-3,
    "epochs": 10,
    "batch_size": 32,
    "max_len": 40,
    "grad_clip_norm": 5.0,
    "attention": True,
    # shared
    "seed": 0,
}

# Keys whose None default means "unset"; they parse as integers.
_INT_OR_NONE = {"max_commits", "max_source_tokens", "max_target_tokens"}


def _coerce(key: str, raw: str):
    default = CONFIG_DEFAULTS[key]
    try:
        if key in _INT_OR_NONE:
            return None if raw.lower() in ("none", "") else int(raw)
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [part for part in raw.split(",") if part]
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def _check_type(key: str, value):
    default = CONFIG_DEFAULTS[key]
    if key in _INT_OR_NONE:
        if value is not None and not isinstance(value, int):
            raise ConfigError(f"config key {key} must be an integer or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key} must be a boolean")
    elif isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"config key {key} must be an integer")
    elif isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"config key {key} must be a number")
        value = float(value)
    elif isinstance(default, list):
        if (not isinstance(value, list)
                or not all(isinstance(v, str) for v in value)):
            raise ConfigError(f"config key {key} must be a list of strings")
    elif not isinstance(value, str):
        raise ConfigError(f"config key {key} must be a string")
    return value


def load_config(path: str | None, overrides: list[str]) -> dict:
    """Defaults, then file values, then KEY=VALUE overrides."""
    cfg = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in doc.items():
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            cfg[key] = _check_type(key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        cfg[key] = _coerce(key, raw)
    return cfg


def _hyper_from_config(cfg: dict) -> model.Hyperparams:
    try:
        return model.Hyperparams(
            embed_dim=cfg["embed_dim"],
            hidden_dim=cfg["hidden_dim"],
            attn_dim=cfg["attn_dim"],
            num_layers=cfg["num_layers"],
            learning_rate=cfg["learning_rate"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            max_len=cfg["max_len"],
            seed=cfg["seed"],
            grad_clip_norm=cfg["grad_clip_norm"],
            attention=cfg["attention"],
        )
    except (model.ModelError, TypeError) as exc:
        raise ConfigError(f"invalid model configuration: {exc}") from exc


def cmd_mine(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    if args.max_commits is not None:
        cfg["max_commits"] = args.max_commits
    if args.extensions is not None:
        cfg["include_extensions"] = [e for e in args.extensions.split(",") if e]
    if args.include_merges:
        cfg["skip_merge_commits"] = False
    if args.dedup is not None:
        cfg["dedup_mode"] = args.dedup
    try:
        config = MiningConfig(
            repo_path=args.repo,
            max_commits=cfg["max_commits"],
            include_extensions=frozenset(cfg["include_extensions"]),
            skip_merge_commits=cfg["skip_merge_commits"],
            dedup_mode=cfg["dedup_mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    corpus = mine_repository(config)
    save_jsonl(corpus, args.out)
    print(f"mined {len(corpus)} samples from {args.repo} into {args.out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = load_jsonl(args.corpus)
    histogram = length_histogram(corpus, args.field, args.bin_width)
    csv_text = histogram.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote histogram for {len(corpus)} samples to {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    if args.dedup is not None:
        cfg["dedup_mode"] = args.dedup
    if args.seed is not None:
        cfg["seed"] = args.seed
    corpus = load_jsonl(args.corpus)
    if cfg["dedup_mode"] != "none":
        corpus = deduplicate(corpus, cfg["dedup_mode"])
    if cfg["max_source_tokens"] is not None or cfg["max_target_tokens"] is not None:
        corpus = filter_by_length(
            corpus,
            cfg["max_source_tokens"] or 10**9,
            cfg["max_target_tokens"] or 10**9,
        )
    try:
        spec = SplitSpec(
            train_frac=cfg["train_frac"],
            val_frac=cfg["val_frac"],
            test_frac=cfg["test_frac"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    train_c, val_c, test_c = split(corpus, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train_c), ("val", val_c), ("test", test_c)):
        save_jsonl(part, out_dir / f"{name}.jsonl")
    print(
        f"prepared splits train={len(train_c)} val={len(val_c)} "
        f"test={len(test_c)} in {out_dir}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    hyper = _hyper_from_config(cfg)
    train_corpus = load_jsonl(args.train)
    val_corpus = load_jsonl(args.val)
    # Vocabularies come from the training split only: no evaluation leakage.
    vocab_src = Vocabulary.build(
        (s.source for s in train_corpus),
        mode=cfg["vocab_mode"], max_size=cfg["vocab_size"],
    )
    vocab_tgt = Vocabulary.build(
        (s.target for s in train_corpus),
        mode=cfg["vocab_mode"], max_size=cfg["vocab_size"],
    )
    params, history = model.train(
        train_corpus, val_corpus, vocab_src, vocab_tgt, hyper
    )
    model.save_checkpoint(params, (vocab_src, vocab_tgt), hyper, args.checkpoint)
    if args.history:
        lines = ["epoch,loss,accuracy"]
        for epoch, (loss, acc) in enumerate(zip(history.loss, history.accuracy)):
            lines.append(f"{epoch},{loss!r},{acc!r}")
        Path(args.history).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(
        f"trained {hyper.epochs} epochs on {len(train_corpus)} samples; "
        f"checkpoint written to {args.checkpoint}"
    )
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    if args.corpus is not None and args.out is None:
        raise ConfigError("--corpus mode requires --out")
    params, (vocab_src, vocab_tgt), hyper = model.load_checkpoint(args.checkpoint)
    if args.input is not None:
        try:
            text = Path(args.input).read_text(encoding="utf-8")
        except OSError as exc:
            raise CorpusFormatError(f"cannot read input {args.input}: {exc}")
        print(model.summarize_text(text, params, vocab_src, vocab_tgt, hyper))
        return 0
    corpus = load_jsonl(args.corpus)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for sample in corpus:
            predicted = model.summarize_text(
                sample.source, params, vocab_src, vocab_tgt, hyper
            )
            fh.write(json.dumps({"id": sample.id, "predicted": predicted},
                                ensure_ascii=False) + "\n")
    print(f"wrote {len(corpus)} predictions to {args.out}")
    return 0


def _load_predictions(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusFormatError(f"cannot read predictions {path}: {exc}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(
                f"malformed JSON at line {lineno} of {path}: {exc}"
            ) from exc
        if not isinstance(obj, dict) or "id" not in obj or "predicted" not in obj:
            raise CorpusFormatError(
                f"line {lineno} of {path} must hold keys id and predicted"
            )
        if obj["id"] in out:
            raise CorpusFormatError(
                f"duplicate id: {obj['id']!r} at line {lineno} of {path}"
            )
        out[obj["id"]] = obj["predicted"]
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = _load_predictions(args.predictions)
    references = load_jsonl(args.references)
    ref_ids = set(references.ids())
    for pred_id in predictions:
        if pred_id not in ref_ids:
            raise CorpusFormatError(
                f"id {pred_id!r} present only in predictions"
            )
    for sample in references:
        if sample.id not in predictions:
            raise CorpusFormatError(
                f"id {sample.id!r} present only in references"
            )
    if not predictions:
        raise CorpusFormatError("empty join: no prediction/reference pairs")
    pairs = [(predictions[s.id], s.target) for s in references]
    report = evaluate_corpus(pairs)
    if args.report:
        Path(args.report).write_text(report_to_json(report), encoding="utf-8")
    if args.comparison:
        rows = [(s.id, s.target, predictions[s.id]) for s in references]
        write_comparison_csv(rows, args.comparison)
    sys.stdout.write(format_report_table(report))
    return 0


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat JSON configuration file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a single config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codesum",
        description="Mine paired corpora from git, train a seq2seq "
                    "summarizer, and score its summaries.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("mine", help="extract (diff, message) pairs from "
                                         "a git repository")
    p.add_argument("--repo", required=True, help="path to a local git repo")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--max-commits", type=int)
    p.add_argument("--extensions", help="comma-separated file suffixes")
    p.add_argument("--include-merges", action="store_true")
    p.add_argument("--dedup", choices=["none", "exact_pair", "target_only"])
    _add_config_flags(p)
    p.set_defaults(func=cmd_mine)

    p = commands.add_parser("stats", help="token-length histogram of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--field", required=True, choices=["source", "target"])
    p.add_argument("--bin-width", type=int, default=5)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = commands.add_parser("prepare", help="dedup, filter and split a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dedup", choices=["none", "exact_pair", "target_only"])
    p.add_argument("--seed", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("train", help="train and write a checkpoint")
    p.add_argument("--train", required=True, help="training corpus JSONL")
    p.add_argument("--val", required=True, help="validation corpus JSONL")
    p.add_argument("--checkpoint", required=True, help="output checkpoint")
    p.add_argument("--history", help="optional per-epoch CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("summarize", help="generate summaries from a "
                                              "checkpoint")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="single code/diff file; prints summary")
    group.add_argument("--corpus", help="corpus JSONL; writes predictions")
    p.add_argument("--out", help="predictions JSONL (corpus mode)")
    p.set_defaults(func=cmd_summarize)

    p = commands.add_parser("evaluate", help="score predictions against "
                                             "references")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--report", help="metric report JSON output")
    p.add_argument("--comparison", help="original-vs-predicted CSV output")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusFormatError, MiningError, model.ModelError,
            model.CheckpointError, AutodiffError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
