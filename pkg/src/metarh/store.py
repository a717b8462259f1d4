"""Loaded dataset state shared by sampling, training, and evaluation.

A dataset directory (as written by the builder) contains::

    background.jsonl          raw background facts, one JSON object per line
    tasks/{train,valid,test}.json   relation symbol -> list of fact records
    candidates.json           relation symbol -> list of candidate entities
    vocab.json                entity/relation id assignment
    stats.json                dataset statistics

The store re-derives everything the model needs from those files: the
inverse-augmented background index, id-space facts, and the true-tail
lookup used for filtered corruption and filtered ranking.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .exceptions import ConsistencyError
from .facts import (
    BackgroundIndex,
    HyperFact,
    Vocabulary,
    add_inverse_facts,
    assert_no_leakage,
    build_background_index,
    parse_facts,
)

SPLITS = ("train", "valid", "test")


class IdFact(NamedTuple):
    """A fact in id space; ``tail`` is None only for incomplete queries."""

    head: int
    relation: int
    tail: int | None
    qualifiers: tuple[tuple[int, int], ...]

    def qualifier_key(self) -> tuple[tuple[int, int], ...]:
        """Order-insensitive qualifier key (sorted multiset)."""
        return tuple(sorted(self.qualifiers))


def to_id_fact(fact: HyperFact, vocab: Vocabulary) -> IdFact:
    return IdFact(
        head=vocab.entity_id(fact.head),
        relation=vocab.relation_id(fact.relation),
        tail=None if fact.tail is None else vocab.entity_id(fact.tail),
        qualifiers=tuple((vocab.relation_id(a), vocab.entity_id(v))
                         for a, v in fact.qualifiers),
    )


def to_hyper_fact(fact: IdFact, vocab: Vocabulary) -> HyperFact:
    return HyperFact(
        head=vocab.entity_symbol(fact.head),
        relation=vocab.relation_symbol(fact.relation),
        tail=None if fact.tail is None else vocab.entity_symbol(fact.tail),
        qualifiers=tuple((vocab.relation_symbol(a), vocab.entity_symbol(v))
                         for a, v in fact.qualifiers),
    )


def vocab_hash(vocab: Vocabulary) -> bytes:
    """SHA-256 over the canonical vocabulary JSON; pins checkpoints to data."""
    canonical = json.dumps(vocab.to_dict(), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).digest()


@dataclass
class KnowledgeStore:
    """Vocabulary, task splits, candidate sets, and the background index."""

    vocab: Vocabulary
    tasks: dict[str, dict[int, list[IdFact]]]
    candidates: dict[int, list[int]]
    background: BackgroundIndex
    true_tails: dict[tuple[int, int, tuple], set[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.true_tails:
            for split_tasks in self.tasks.values():
                for facts in split_tasks.values():
                    for fact in facts:
                        self._register_true_tail(fact)

    def _register_true_tail(self, fact: IdFact) -> None:
        if fact.tail is None:
            return
        key = (fact.relation, fact.head, fact.qualifier_key())
        self.true_tails.setdefault(key, set()).add(fact.tail)

    def known_true_tails(self, fact: IdFact) -> set[int]:
        """All tails observed in few-shot data for this (h, r, qualifiers)."""
        return self.true_tails.get((fact.relation, fact.head, fact.qualifier_key()), set())

    def relation_facts(self, split: str, relation: int) -> list[IdFact]:
        return self.tasks[split][relation]

    def split_relations(self, split: str) -> list[int]:
        return sorted(self.tasks[split])

    def background_fact(self, fact_id: int) -> IdFact:
        return to_id_fact(self.background.facts[fact_id], self.vocab)

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    def hash(self) -> bytes:
        return vocab_hash(self.vocab)

    @classmethod
    def from_facts(cls, vocab: Vocabulary,
                   tasks: dict[str, dict[str, list[HyperFact]]],
                   candidates: dict[str, list[str]],
                   background_raw: list[HyperFact],
                   check_leakage: bool = True) -> KnowledgeStore:
        """Assemble a store from symbol-space pieces.

        ``background_raw`` must not be inverse-augmented; augmentation and
        indexing happen here.
        """
        augmented = add_inverse_facts(background_raw, vocab)
        index = build_background_index(augmented, vocab)
        id_tasks: dict[str, dict[int, list[IdFact]]] = {}
        few_shot_ids: set[int] = set()
        for split, per_relation in tasks.items():
            id_tasks[split] = {}
            for rel_symbol, facts in per_relation.items():
                rid = vocab.relation_id(rel_symbol)
                few_shot_ids.add(rid)
                id_tasks[split][rid] = [to_id_fact(f, vocab) for f in facts]
        if check_leakage:
            assert_no_leakage(index, vocab, few_shot_ids)
        id_candidates = {
            vocab.relation_id(rel_symbol): [vocab.entity_id(e) for e in ents]
            for rel_symbol, ents in candidates.items()
        }
        for split_tasks in id_tasks.values():
            for rid in split_tasks:
                if rid not in id_candidates:
                    raise ConsistencyError(
                        f"no candidate set for relation {vocab.relation_symbol(rid)!r}")
        return cls(vocab=vocab, tasks=id_tasks, candidates=id_candidates, background=index)

    @classmethod
    def load(cls, directory: str | Path, check_leakage: bool = True) -> KnowledgeStore:
        directory = Path(directory)
        with open(directory / "vocab.json", encoding="utf-8") as fh:
            vocab = Vocabulary.from_dict(json.load(fh))
        with open(directory / "background.jsonl", encoding="utf-8") as fh:
            background_raw = parse_facts(fh, vocab=None)
        tasks: dict[str, dict[str, list[HyperFact]]] = {}
        for split in SPLITS:
            path = directory / "tasks" / f"{split}.json"
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
            tasks[split] = {
                rel: [HyperFact(r["h"], r["r"], r["t"],
                                tuple((a, v) for a, v in r["q"]))
                      for r in records]
                for rel, records in raw.items()
            }
        with open(directory / "candidates.json", encoding="utf-8") as fh:
            candidates = json.load(fh)
        return cls.from_facts(vocab, tasks, candidates, background_raw,
                              check_leakage=check_leakage)
