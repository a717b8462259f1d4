"""Deterministic synthetic corpus with a learnable tail pattern.

Entities form three families: heads ``H*``, qualifier values ``V*`` and
tails ``T*``.  Heads fall into ``head_classes`` groups, values into
``value_classes`` groups, and each pattern relation ``rel_NN`` carries an
offset.  Facts follow

    (H_i, rel_NN, T_{index(class(i), class(j), offset)}, [("has_level", V_j)])

so the tail is a deterministic function of the head and the qualifier
value, and every (head class, value class, offset) combination owns one
tail entity.  Helper facts (tail chains plus head/value anchors) mention
the same entities under low-frequency relations, which keeps them out of
the few-shot selection range and turns them into background data.
Generation is pure: same arguments, same corpus, byte for byte.
"""

from __future__ import annotations

from pathlib import Path

from .facts import HyperFact, write_facts
from .sampling import derive_rng

QUALIFIER_ATTRIBUTE = "has_level"
MAX_HELPER_INSTANCES = 19


def _shard(name: str, index: int, total: int) -> str:
    shards = (total + MAX_HELPER_INSTANCES - 1) // MAX_HELPER_INSTANCES
    return f"{name}_{index % shards}"


def pattern_corpus(n_relations: int = 20, n_heads: int = 28,
                   n_values: int = 16, n_offsets: int = 2,
                   head_classes: int = 4, value_classes: int = 2,
                   facts_per_relation: int = 60, seed: int = 0) -> list[HyperFact]:
    """Build the corpus as a list of facts in deterministic order.

    With the defaults: 20 pattern relations over exactly 60 entities
    (28 heads, 16 values, 4*2*2 = 16 tails), 60 facts each.
    """
    n_tails = head_classes * value_classes * n_offsets
    heads = [f"H{i:02d}" for i in range(n_heads)]
    values = [f"V{j:02d}" for j in range(n_values)]
    tails = [f"T{k:02d}" for k in range(n_tails)]

    facts = []
    all_pairs = [(i, j) for i in range(n_heads) for j in range(n_values)]
    for m in range(n_relations):
        relation = f"rel_{m:02d}"
        offset = m % n_offsets
        rng = derive_rng(seed, "pairs", relation)
        for i, j in rng.sample(all_pairs, facts_per_relation):
            index = ((i % head_classes) * value_classes
                     + j % value_classes) * n_offsets + offset
            facts.append(HyperFact(
                head=heads[i],
                relation=relation,
                tail=tails[index],
                qualifiers=((QUALIFIER_ATTRIBUTE, values[j]),),
            ))

    # helper facts: sharded so no helper relation reaches few-shot frequency
    for k in range(n_tails - 1):
        quals = (("step", values[1]),) if k % 2 == 0 and n_values > 1 else ()
        facts.append(HyperFact(tails[k], _shard("next", k, n_tails - 1),
                               tails[k + 1], quals))
    for i in range(n_heads):
        facts.append(HyperFact(heads[i], _shard("anchor", i, n_heads),
                               tails[i % n_tails]))
    for j in range(n_values):
        facts.append(HyperFact(values[j], _shard("level", j, n_values),
                               tails[j % n_tails]))
    return facts


def write_pattern_corpus(path: str | Path, **kwargs) -> int:
    """Write the corpus as JSONL; returns the number of facts."""
    facts = pattern_corpus(**kwargs)
    with open(path, "w", encoding="utf-8") as handle:
        write_facts(facts, handle)
    return len(facts)
