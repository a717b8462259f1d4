"""Rank aggregation: mean reciprocal rank and Hits@k reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .exceptions import EvaluationError

HITS_LEVELS = (1, 5, 10)


def check_ranks(ranks: Iterable[int]) -> list[int]:
    out = []
    for rank in ranks:
        if rank < 1 or rank != int(rank):
            raise EvaluationError(f"ranks must be positive integers, got {rank!r}")
        out.append(int(rank))
    return out


def mean_reciprocal_rank(ranks: Sequence[int]) -> float:
    ranks = check_ranks(ranks)
    if not ranks:
        raise EvaluationError("cannot aggregate an empty rank list")
    return sum(1.0 / r for r in ranks) / len(ranks)


def hits_at(ranks: Sequence[int], k: int) -> float:
    ranks = check_ranks(ranks)
    if not ranks:
        raise EvaluationError("cannot aggregate an empty rank list")
    return sum(1 for r in ranks if r <= k) / len(ranks)


@dataclass
class EvalReport:
    """Micro-averaged ranking metrics with a per-relation breakdown."""

    n_queries: int
    mrr: float
    hits: dict[int, float]
    per_relation: dict[str, dict[str, float]] = field(default_factory=dict)
    macro: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.mrr <= 1.0:
            raise EvaluationError(f"MRR out of range: {self.mrr}")
        levels = sorted(self.hits)
        for lo, hi in zip(levels, levels[1:]):
            if self.hits[lo] > self.hits[hi] + 1e-12:
                raise EvaluationError(
                    f"Hits@{lo}={self.hits[lo]} exceeds Hits@{hi}={self.hits[hi]}")
        if levels and self.mrr < self.hits[levels[0]] - 1e-12:
            raise EvaluationError(
                f"MRR {self.mrr} below Hits@{levels[0]} {self.hits[levels[0]]}")

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "averaging": "macro" if self.macro else "micro",
            "per_relation": self.per_relation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def summarize(ranks_by_relation: Mapping[str, Sequence[int]],
              macro: bool = False,
              levels: Sequence[int] = HITS_LEVELS) -> EvalReport:
    """Aggregate per-relation rank lists into one report.

    Micro-averaging pools every query; macro-averaging gives each relation
    equal weight regardless of its query count.
    """
    if not ranks_by_relation:
        raise EvaluationError("no relations to aggregate")
    per_relation = {}
    for rel, ranks in ranks_by_relation.items():
        per_relation[rel] = {
            "n_queries": len(check_ranks(ranks)),
            "mrr": mean_reciprocal_rank(ranks),
            **{f"hits@{k}": hits_at(ranks, k) for k in levels},
        }
    all_ranks = [r for ranks in ranks_by_relation.values() for r in ranks]
    if macro:
        n_rel = len(per_relation)
        mrr = sum(stats["mrr"] for stats in per_relation.values()) / n_rel
        hits = {k: sum(stats[f"hits@{k}"] for stats in per_relation.values()) / n_rel
                for k in levels}
    else:
        mrr = mean_reciprocal_rank(all_ranks)
        hits = {k: hits_at(all_ranks, k) for k in levels}
    return EvalReport(n_queries=len(all_ranks), mrr=mrr, hits=hits,
                      per_relation=per_relation, macro=macro)
