"""Episode assembly: support/query sampling, tail corruption, and
per-entity background fact sampling.

Randomness flows through explicit ``random.Random`` instances.  The helper
``derive_rng`` hashes (seed, label, ...) into an independent stream, so an
episode is reproducible from (seed, task id, episode index) alone.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .exceptions import CorruptionError, EpisodeError
from .store import IdFact, KnowledgeStore


def derive_rng(seed: int, *parts) -> random.Random:
    """Independent RNG stream keyed by a seed and any hashable labels."""
    key = ":".join([str(seed)] + [str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "little"))


@dataclass
class Episode:
    """One few-shot task instance: k support facts, a query batch, their
    corrupted tails, and sampled background fact ids for support entities."""

    relation: int
    support: list[IdFact]
    queries: list[IdFact]
    support_negatives: list[list[int]]
    query_negatives: list[list[int]]
    background_sample: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        facts = self.support + self.queries
        if any(f.relation != self.relation for f in facts):
            raise EpisodeError("episode mixes relations")
        if set(self.support) & set(self.queries):
            raise EpisodeError("support and query sets overlap")


def corrupt_tail(fact: IdFact, candidates: list[int], known_true_tails: set[int],
                 n_neg: int, rng: random.Random) -> list[int]:
    """Uniform corrupted tails from the candidate set, excluding every tail
    known to be true for this (head, relation, qualifiers)."""
    pool = [c for c in candidates if c not in known_true_tails]
    if not pool:
        raise CorruptionError(
            f"no valid negative tail for relation {fact.relation}: "
            "all candidates are known true tails")
    return [pool[rng.randrange(len(pool))] for _ in range(n_neg)]


def sample_background(store: KnowledgeStore, entities, cap: int,
                      rng: random.Random) -> dict[int, list[int]]:
    """For each entity, up to ``cap`` of its background fact ids, sampled
    without replacement; under-full buckets are used whole."""
    sample: dict[int, list[int]] = {}
    for eid in entities:
        if eid in sample:
            continue
        bucket = store.background.fact_ids(eid)
        if len(bucket) <= cap:
            sample[eid] = list(bucket)
        else:
            sample[eid] = rng.sample(bucket, cap)
    return sample


def sample_episode(store: KnowledgeStore, split: str, relation: int, k: int,
                   query_batch: int, background_cap: int, n_neg: int,
                   rng: random.Random) -> Episode:
    """Draw a training episode: k support facts without replacement, a query
    batch from the remainder, negatives for both, background for support."""
    facts = store.relation_facts(split, relation)
    if len(facts) <= k:
        raise EpisodeError(
            f"relation {store.vocab.relation_symbol(relation)!r} has "
            f"{len(facts)} facts; need more than k={k}")
    support = rng.sample(facts, k)
    chosen = set(support)
    remainder = [f for f in facts if f not in chosen]
    queries = rng.sample(remainder, min(query_batch, len(remainder)))
    return _finish_episode(store, relation, support, queries,
                           background_cap, n_neg, rng)


def eval_episode(store: KnowledgeStore, split: str, relation: int, k: int,
                 background_cap: int, n_neg: int, rng: random.Random) -> Episode:
    """Deterministic evaluation episode: support is the first k facts in the
    dataset's stored order, queries are all remaining facts."""
    facts = store.relation_facts(split, relation)
    if len(facts) <= k:
        raise EpisodeError(
            f"relation {store.vocab.relation_symbol(relation)!r} has "
            f"{len(facts)} facts; need more than k={k}")
    support = facts[:k]
    queries = facts[k:]
    return _finish_episode(store, relation, support, queries,
                           background_cap, n_neg, rng)


def _finish_episode(store: KnowledgeStore, relation: int, support: list[IdFact],
                    queries: list[IdFact], background_cap: int, n_neg: int,
                    rng: random.Random) -> Episode:
    candidates = store.candidates[relation]
    support_negatives = [
        corrupt_tail(f, candidates, store.known_true_tails(f), n_neg, rng)
        for f in support
    ]
    query_negatives = [
        corrupt_tail(f, candidates, store.known_true_tails(f), n_neg, rng)
        for f in queries
    ]
    support_entities = []
    for fact in support:
        support_entities.append(fact.head)
        if fact.tail is not None:
            support_entities.append(fact.tail)
    background_sample = sample_background(store, support_entities,
                                          background_cap, rng)
    return Episode(relation=relation, support=support, queries=queries,
                   support_negatives=support_negatives,
                   query_negatives=query_negatives,
                   background_sample=background_sample)
