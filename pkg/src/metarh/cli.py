"""Command-line entry point: build-dataset, train, evaluate, predict.

Exit codes: 0 success, 1 runtime error, 2 usage/config error, 3 data or
leakage error.  Every run appends one JSON line to the run log with the
effective config, the seed, and git-style content hashes of its input
files.  ``METARH_SEED`` is used when no seed is given by flag or config
file.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import torch

from .builder import BuildConfig, build_dataset, write_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import ConfigError, DataError, InputError, MetaRHError
from .facts import parse_facts
from .sampling import derive_rng
from .scorer import sort_candidates
from .store import KnowledgeStore, to_id_fact
from .training import TrainConfig, evaluate, support_adapt, train

logger = logging.getLogger("metarh.cli")

DATASET_FILES = ("vocab.json", "background.jsonl", "candidates.json",
                 "stats.json", "tasks/train.json", "tasks/valid.json",
                 "tasks/test.json")


def blob_hash(path: str | Path) -> str:
    """Content hash in git's blob format: sha1("blob <len>\\0" + bytes)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def hash_inputs(paths: list[str | Path]) -> dict[str, str | None]:
    hashes: dict[str, str | None] = {}
    for path in paths:
        path = Path(path)
        if path.is_dir():
            for name in DATASET_FILES:
                child = path / name
                if child.is_file():
                    hashes[str(child)] = blob_hash(child)
        elif path.is_file():
            hashes[str(path)] = blob_hash(path)
        else:
            hashes[str(path)] = None
    return hashes


def append_run_log(log_path: str | Path, command: str, seed: int,
                   config: dict, inputs: dict[str, str | None]) -> None:
    entry = {
        "time": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": inputs,
    }
    with open(log_path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(entry, sort_keys=True) + "\n")


def env_seed() -> int | None:
    raw = os.environ.get("METARH_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"METARH_SEED must be an integer, got {raw!r}") from None


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: expected a JSON object")
    return data


def merged_train_config(args: argparse.Namespace,
                        base: dict | None = None) -> TrainConfig:
    """Precedence: flags > config file > checkpoint/base > defaults."""
    data = dict(base or {})
    data.update(load_config_file(args.config))
    for field in dataclasses.fields(TrainConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            data[field.name] = value
    if "seed" not in data:
        fallback = env_seed()
        if fallback is not None:
            data["seed"] = fallback
    return TrainConfig.from_dict(data)


def add_train_config_flags(parser: argparse.ArgumentParser) -> None:
    """Expose every TrainConfig field as ``--field-name value``."""
    for field in dataclasses.fields(TrainConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type in ("bool", bool):
            parser.add_argument(flag, action=argparse.BooleanOptionalAction,
                                default=None)
        elif field.type in ("int", int):
            parser.add_argument(flag, type=int, default=None)
        elif field.type in ("float", float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metarh",
        description="Few-shot tail prediction on hyper-relational "
                    "knowledge graphs.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--run-log", default="metarh-runs.jsonl",
                        help="append-only JSONL run log (default: %(default)s)")
    common.add_argument("--config", default=None,
                        help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build-dataset", parents=[common],
                             help="construct a few-shot dataset from a fact corpus")
    p_build.add_argument("--input", required=True, help="corpus JSONL file")
    p_build.add_argument("--out", required=True, help="output dataset directory")
    p_build.add_argument("--min", type=int, default=None,
                         help="minimum instances for a few-shot relation")
    p_build.add_argument("--max", type=int, default=None,
                         help="maximum instances for a few-shot relation")
    p_build.add_argument("--fractions", default=None,
                         help="train,valid,test relation fractions, e.g. 0.85,0.05,0.10")
    p_build.add_argument("--seed", type=int, default=None)

    p_train = sub.add_parser("train", parents=[common],
                             help="train a model on a built dataset")
    p_train.add_argument("--data", required=True, help="dataset directory")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    add_train_config_flags(p_train)

    p_eval = sub.add_parser("evaluate", parents=[common],
                            help="rank all queries of a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="dataset directory")
    p_eval.add_argument("--split", choices=("train", "valid", "test"),
                        default="test")
    p_eval.add_argument("--macro", action="store_true",
                        help="average per relation instead of per query")
    p_eval.add_argument("--raw", action="store_true",
                        help="disable filtered ranking")
    p_eval.add_argument("--out", default=None, help="also write the report here")
    add_train_config_flags(p_eval)

    p_pred = sub.add_parser("predict", parents=[common],
                            help="rank candidate tails for incomplete queries")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--data", required=True,
                        help="dataset directory (vocabulary and background)")
    p_pred.add_argument("--support", required=True,
                        help="JSONL file with the relation's support facts")
    p_pred.add_argument("--queries", required=True,
                        help="JSONL file with \"t\": null queries")
    p_pred.add_argument("--candidates", default=None,
                        help="JSON file {relation: [entities]} overriding the "
                             "dataset's candidate sets")
    p_pred.add_argument("--top-n", type=int, default=10)
    p_pred.add_argument("--out", default=None, help="also write predictions here")
    add_train_config_flags(p_pred)
    return parser


# -- subcommand bodies -------------------------------------------------------

def run_build(args: argparse.Namespace) -> int:
    file_cfg = load_config_file(args.config)
    data = dict(file_cfg)
    if args.min is not None:
        data["min_instances"] = args.min
    if args.max is not None:
        data["max_instances"] = args.max
    if args.fractions is not None:
        parts = args.fractions.split(",")
        if len(parts) != 3:
            raise ConfigError("--fractions needs three comma-separated numbers")
        data["split_fractions"] = tuple(float(p) for p in parts)
    if args.seed is not None:
        data["rng_seed"] = args.seed
    elif "rng_seed" not in data:
        fallback = env_seed()
        if fallback is not None:
            data["rng_seed"] = fallback
    if isinstance(data.get("split_fractions"), list):
        data["split_fractions"] = tuple(data["split_fractions"])
    known = set(BuildConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown build config fields: {sorted(unknown)}")
    cfg = BuildConfig(**data)
    append_run_log(args.run_log, "build-dataset", cfg.rng_seed,
                   dataclasses.asdict(cfg), hash_inputs([args.input]))
    with open(args.input, encoding="utf-8") as handle:
        corpus = parse_facts(handle)
    built = build_dataset(corpus, cfg)
    write_dataset(built, args.out)
    print(json.dumps(built.stats.to_dict(), indent=2, sort_keys=True))
    return 0


def run_train(args: argparse.Namespace) -> int:
    cfg = merged_train_config(args)
    inputs = [args.data]
    if cfg.pretrained_embeddings:
        inputs.append(cfg.pretrained_embeddings)
    append_run_log(args.run_log, "train", cfg.seed, cfg.to_dict(),
                   hash_inputs(inputs))
    store = KnowledgeStore.load(args.data)
    result = train(store, cfg)
    extra = {
        "train_config": cfg.to_dict(),
        "best_step": result.best_step,
        "best_valid_mrr": result.best_valid_mrr,
    }
    save_checkpoint(result.model, store.hash(), args.out,
                    step=result.steps_run, extra=extra)
    summary = {
        "checkpoint": args.out,
        "steps_run": result.steps_run,
        "best_step": result.best_step,
        "best_valid_mrr": result.best_valid_mrr,
        "final_loss": result.history[-1]["loss"] if result.history else None,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def run_evaluate(args: argparse.Namespace) -> int:
    store = KnowledgeStore.load(args.data)
    model, meta = load_checkpoint(args.checkpoint,
                                  expected_vocab_hash=store.hash())
    cfg = merged_train_config(args, base=meta["extra"].get("train_config", {}))
    append_run_log(args.run_log, "evaluate", cfg.seed, cfg.to_dict(),
                   hash_inputs([args.checkpoint, args.data]))
    report = evaluate(model, store, args.split, cfg, macro=args.macro,
                      filtered=not args.raw)
    text = report.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def _load_fact_file(path: str, store: KnowledgeStore,
                    allow_null_tail: bool) -> list:
    with open(path, encoding="utf-8") as handle:
        facts = parse_facts(handle, allow_null_tail=allow_null_tail)
    return [to_id_fact(f, store.vocab) for f in facts]


def run_predict(args: argparse.Namespace) -> int:
    if args.top_n < 1:
        raise ConfigError(f"--top-n must be at least 1, got {args.top_n}")
    store = KnowledgeStore.load(args.data)
    model, meta = load_checkpoint(args.checkpoint,
                                  expected_vocab_hash=store.hash())
    cfg = merged_train_config(args, base=meta["extra"].get("train_config", {}))
    inputs = [args.checkpoint, args.data, args.support, args.queries]
    if args.candidates:
        inputs.append(args.candidates)
    append_run_log(args.run_log, "predict", cfg.seed, cfg.to_dict(),
                   hash_inputs(inputs))

    support = _load_fact_file(args.support, store, allow_null_tail=False)
    if not support:
        raise InputError(f"support file {args.support} holds no facts; "
                         "prediction needs at least one support instance")
    queries = _load_fact_file(args.queries, store, allow_null_tail=True)
    if not queries:
        raise InputError(f"query file {args.queries} holds no queries")
    relation = support[0].relation
    for fact in support + queries:
        if fact.relation != relation:
            raise InputError(
                "support and query files must share one relation; found "
                f"{store.vocab.relation_symbol(relation)!r} and "
                f"{store.vocab.relation_symbol(fact.relation)!r}")

    rel_symbol = store.vocab.relation_symbol(relation)
    if args.candidates:
        with open(args.candidates, encoding="utf-8") as handle:
            table = json.load(handle)
        if rel_symbol not in table:
            raise InputError(f"candidate file lacks relation {rel_symbol!r}")
        candidates = [store.vocab.entity_id(s) for s in table[rel_symbol]]
    elif relation in store.candidates:
        candidates = store.candidates[relation]
    else:
        raise InputError(f"no candidate set for relation {rel_symbol!r}; "
                         "pass --candidates")

    rng = derive_rng(cfg.seed, "predict", relation)
    r_adj = support_adapt(model, store, cfg, support, candidates, rng)

    predictions = []
    for query in queries:
        with torch.no_grad():
            scores = model.fact_scores(query, r_adj, candidates)
        ranked = sort_candidates(scores, candidates)[:args.top_n]
        predictions.append({
            "query": {
                "h": store.vocab.entity_symbol(query.head),
                "r": rel_symbol,
                "t": None if query.tail is None
                     else store.vocab.entity_symbol(query.tail),
                "q": [[store.vocab.relation_symbol(a),
                       store.vocab.entity_symbol(v)]
                      for a, v in query.qualifiers],
            },
            "candidates": [
                {"entity": store.vocab.entity_symbol(eid), "score": score}
                for eid, score in ranked
            ],
        })
    payload = json.dumps({"relation": rel_symbol, "predictions": predictions},
                         indent=2, sort_keys=True)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "build-dataset": run_build,
    "train": run_train,
    "evaluate": run_evaluate,
    "predict": run_predict,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (MetaRHError, OSError) as exc:
        print(f"error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
