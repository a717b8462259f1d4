"""Benchmark construction from a raw hyper-relational fact corpus.

Pipeline: pick relations with a bounded instance count as few-shot
relations, pull their facts (dropping any fact that smuggles a few-shot
relation through a qualifier attribute), pull background facts about the
entities involved (dropping any fact that mentions a few-shot relation
anywhere), split relations into train/valid/test tasks, derive per-relation
candidate sets, and write the dataset directory.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import BuildError, ConfigError
from .facts import (
    HyperFact,
    Vocabulary,
    add_inverse_facts,
    assert_no_leakage,
    build_background_index,
    write_facts,
)

CANDIDATE_CAP = 1000


@dataclass
class BuildConfig:
    min_instances: int = 20
    max_instances: int = 1000
    split_fractions: tuple[float, float, float] = (0.85, 0.05, 0.10)
    rng_seed: int = 0

    def validate(self) -> None:
        if not 0 < self.min_instances <= self.max_instances:
            raise ConfigError("require 0 < min_instances <= max_instances")
        if any(f <= 0 for f in self.split_fractions):
            raise ConfigError("split fractions must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


@dataclass
class DatasetStats:
    """Dataset statistics; qualifier vocabularies are reported both over
    few-shot data alone and over few-shot plus background data, since the
    two readings give different counts."""

    n_entities: int
    n_relations: int
    n_qualifier_values_few_shot: int
    n_qualifier_attributes_few_shot: int
    n_qualifier_values_all: int
    n_qualifier_attributes_all: int
    n_background_facts: int
    background_hyper_rate: float
    n_few_shot_facts: int
    few_shot_hyper_rate: float
    n_tasks: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def select_few_shot_relations(corpus: list[HyperFact], cfg: BuildConfig) -> set[str]:
    """Relations whose primary-triple instance count lies within the bounds
    (inclusive).  Qualifier-attribute occurrences do not count."""
    cfg.validate()
    counts: dict[str, int] = {}
    for fact in corpus:
        counts[fact.relation] = counts.get(fact.relation, 0) + 1
    selected = {r for r, c in counts.items()
                if cfg.min_instances <= c <= cfg.max_instances}
    if not selected:
        raise BuildError("no few-shot relations under bounds "
                         f"[{cfg.min_instances}, {cfg.max_instances}]")
    return selected


def extract_few_shot_data(corpus: list[HyperFact],
                          few_shot_relations: set[str]) -> list[HyperFact]:
    """Facts of few-shot relations, excluding any that carry a few-shot
    relation in a qualifier attribute position."""
    out = []
    for fact in corpus:
        if fact.relation not in few_shot_relations:
            continue
        if any(a in few_shot_relations for a, _ in fact.qualifiers):
            continue
        out.append(fact)
    return out


def extract_background_data(corpus: list[HyperFact], few_shot_data: list[HyperFact],
                            few_shot_relations: set[str]) -> list[HyperFact]:
    """Corpus facts that mention (in any position) an entity of the few-shot
    data, excluding facts that contain a few-shot relation anywhere."""
    entities: set[str] = set()
    for fact in few_shot_data:
        entities.update(fact.entities())
    out = []
    for fact in corpus:
        if any(r in few_shot_relations for r in fact.relations()):
            continue
        if any(e in entities for e in fact.entities()):
            out.append(fact)
    return out


def split_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """Half-up rounding for valid/test, floored at 1; remainder to train."""
    n_valid = max(1, math.floor(fractions[1] * n + 0.5))
    n_test = max(1, math.floor(fractions[2] * n + 0.5))
    n_train = n - n_valid - n_test
    return n_train, n_valid, n_test


def split_tasks(few_shot_relations: set[str],
                cfg: BuildConfig) -> tuple[set[str], set[str], set[str]]:
    """Deterministic relation-level partition into train/valid/test."""
    cfg.validate()
    if len(few_shot_relations) < 3:
        raise BuildError("need at least 3 few-shot relations to split")
    n = len(few_shot_relations)
    n_train, n_valid, n_test = split_counts(n, cfg.split_fractions)
    if n_train < 1:
        raise BuildError(f"split of {n} relations leaves no training tasks")
    ordered = sorted(few_shot_relations)
    random.Random(cfg.rng_seed).shuffle(ordered)
    train = set(ordered[:n_train])
    valid = set(ordered[n_train:n_train + n_valid])
    test = set(ordered[n_train + n_valid:])
    return train, valid, test


def build_candidate_sets(few_shot_data: list[HyperFact],
                         background: list[HyperFact],
                         cap: int = CANDIDATE_CAP) -> dict[str, list[str]]:
    """Type-proxy candidate sets.

    The type proxy of an entity is the set of relations under which it
    appears as a primary tail (few-shot or background).  Candidates of a
    relation are the entities whose proxy intersects the union of proxies of
    the relation's observed tails, capped by descending degree, and always
    unioned with the observed tails themselves.
    """
    tail_relations: dict[str, set[str]] = {}
    degree: dict[str, int] = {}
    for fact in list(few_shot_data) + list(background):
        if fact.tail is not None:
            tail_relations.setdefault(fact.tail, set()).add(fact.relation)
        for entity in set(fact.entities()):
            degree[entity] = degree.get(entity, 0) + 1

    observed_tails: dict[str, list[str]] = {}
    for fact in few_shot_data:
        if fact.tail is not None:
            observed_tails.setdefault(fact.relation, []).append(fact.tail)

    candidates: dict[str, list[str]] = {}
    for relation, tails in observed_tails.items():
        proxy_union: set[str] = set()
        for tail in tails:
            proxy_union.update(tail_relations.get(tail, ()))
        matched = {e for e, proxy in tail_relations.items() if proxy & proxy_union}
        capped = sorted(matched, key=lambda e: (-degree.get(e, 0), e))[:cap]
        candidates[relation] = sorted(set(capped) | set(tails))
    return candidates


def _hyper_rate(facts: list[HyperFact]) -> float:
    if not facts:
        return 0.0
    return sum(1 for f in facts if f.arity >= 1) / len(facts)


def compute_stats(few_shot_data: list[HyperFact], background: list[HyperFact],
                  tasks: set[str]) -> DatasetStats:
    entities: set[str] = set()
    relations: set[str] = set()
    qual_values_fs: set[str] = set()
    qual_attrs_fs: set[str] = set()
    qual_values_all: set[str] = set()
    qual_attrs_all: set[str] = set()
    for fact in list(few_shot_data) + list(background):
        entities.update(fact.entities())
        relations.update(fact.relations())
        for a, v in fact.qualifiers:
            qual_attrs_all.add(a)
            qual_values_all.add(v)
    for fact in few_shot_data:
        for a, v in fact.qualifiers:
            qual_attrs_fs.add(a)
            qual_values_fs.add(v)
    return DatasetStats(
        n_entities=len(entities),
        n_relations=len(relations),
        n_qualifier_values_few_shot=len(qual_values_fs),
        n_qualifier_attributes_few_shot=len(qual_attrs_fs),
        n_qualifier_values_all=len(qual_values_all),
        n_qualifier_attributes_all=len(qual_attrs_all),
        n_background_facts=len(background),
        background_hyper_rate=_hyper_rate(background),
        n_few_shot_facts=len(few_shot_data),
        few_shot_hyper_rate=_hyper_rate(few_shot_data),
        n_tasks=len(tasks),
    )


@dataclass
class BuiltDataset:
    vocab: Vocabulary
    few_shot_data: list[HyperFact]
    background: list[HyperFact]
    splits: dict[str, set[str]]
    candidates: dict[str, list[str]]
    stats: DatasetStats
    tasks: dict[str, dict[str, list[HyperFact]]] = field(init=False)

    def __post_init__(self) -> None:
        by_relation: dict[str, list[HyperFact]] = {}
        for fact in self.few_shot_data:
            by_relation.setdefault(fact.relation, []).append(fact)
        self.tasks = {
            split: {rel: by_relation[rel] for rel in sorted(relations)}
            for split, relations in self.splits.items()
        }


def build_dataset(corpus: list[HyperFact], cfg: BuildConfig) -> BuiltDataset:
    """Run the full construction pipeline on an in-memory corpus."""
    cfg.validate()
    few_shot_relations = select_few_shot_relations(corpus, cfg)
    few_shot_data = extract_few_shot_data(corpus, few_shot_relations)
    background = extract_background_data(corpus, few_shot_data, few_shot_relations)
    train, valid, test = split_tasks(few_shot_relations, cfg)
    candidates = build_candidate_sets(few_shot_data, background)
    stats = compute_stats(few_shot_data, background, few_shot_relations)

    # vocabulary over the output dataset, few-shot facts first, then
    # background, then one inverse partner per relation
    vocab = Vocabulary()
    for fact in few_shot_data + background:
        for e in fact.entities():
            vocab.add_entity(e)
        for r in fact.relations():
            vocab.add_relation(r)
    for rid in range(vocab.n_relations):
        if not vocab.is_inverse(rid):
            vocab.ensure_inverse(vocab.relation_symbol(rid))

    # safety net: the extraction filters must leave no few-shot relation
    # reachable from the background, inverses included
    augmented = add_inverse_facts(background, vocab)
    index = build_background_index(augmented, vocab)
    assert_no_leakage(index, vocab, {vocab.relation_id(r) for r in few_shot_relations})

    # relations with every instance removed by the qualifier-leak filter
    # cannot form a task
    populated = {f.relation for f in few_shot_data}
    splits = {
        "train": train & populated,
        "valid": valid & populated,
        "test": test & populated,
    }
    if any(not rels for rels in splits.values()):
        raise BuildError("a split lost all its relations to leak filtering")

    return BuiltDataset(vocab=vocab, few_shot_data=few_shot_data,
                        background=background, splits=splits,
                        candidates=candidates, stats=stats)


def _fact_record(fact: HyperFact) -> dict:
    return {"h": fact.head, "r": fact.relation, "t": fact.tail,
            "q": [[a, v] for a, v in fact.qualifiers]}


def write_dataset(built: BuiltDataset, out_dir: str | Path) -> None:
    """Write the dataset directory; byte-identical for identical builds."""
    out = Path(out_dir)
    (out / "tasks").mkdir(parents=True, exist_ok=True)
    with open(out / "background.jsonl", "w", encoding="utf-8") as fh:
        write_facts(built.background, fh)
    for split, per_relation in built.tasks.items():
        payload = {rel: [_fact_record(f) for f in facts]
                   for rel, facts in per_relation.items()}
        _write_json(out / "tasks" / f"{split}.json", payload)
    _write_json(out / "candidates.json",
                {rel: built.candidates[rel] for rel in sorted(built.candidates)})
    _write_json(out / "stats.json", built.stats.to_dict())
    _write_json(out / "vocab.json", built.vocab.to_dict())


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
