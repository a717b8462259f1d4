"""Data model for hyper-relational facts.

A fact is a primary triple ``(head, relation, tail)`` plus ``m >= 0``
auxiliary (attribute, value) qualifier pairs.  Facts are immutable; two
facts are equal when their triples match and their qualifiers match as a
multiset, regardless of qualifier order.  Serialization preserves the
stored qualifier order so files round-trip byte-for-byte.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .exceptions import ConsistencyError, LeakageError, ParseError, SchemaError

INVERSE_SUFFIX = "__inv"

Qualifier = tuple[str, str]


@dataclass(frozen=True)
class HyperFact:
    """One hyper-relational fact.

    ``tail`` is ``None`` only for incomplete queries whose tail is to be
    predicted; complete facts always carry a tail entity.
    """

    head: str
    relation: str
    tail: str | None
    qualifiers: tuple[Qualifier, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.qualifiers)

    def entities(self) -> Iterator[str]:
        """All entity symbols mentioned: head, tail, qualifier values."""
        yield self.head
        if self.tail is not None:
            yield self.tail
        for _, value in self.qualifiers:
            yield value

    def relations(self) -> Iterator[str]:
        """All relation symbols mentioned: primary relation, attributes."""
        yield self.relation
        for attribute, _ in self.qualifiers:
            yield attribute

    def _key(self) -> tuple:
        return (self.head, self.relation, self.tail,
                tuple(sorted(self.qualifiers)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HyperFact):
            return NotImplemented
        if (self.head, self.relation, self.tail) != (other.head, other.relation, other.tail):
            return False
        # qualifier multiset: duplicates are significant, order is not
        return Counter(self.qualifiers) == Counter(other.qualifiers)

    def __hash__(self) -> int:
        return hash(self._key())


class Vocabulary:
    """Dense-id bijections for entity and relation symbols.

    Relations created by inverse augmentation carry the ``__inv`` suffix and
    an ``is_inverse`` marker; ``inverse_id`` maps between partners.
    """

    def __init__(self) -> None:
        self._entities: list[str] = []
        self._entity_ids: dict[str, int] = {}
        self._relations: list[str] = []
        self._relation_ids: dict[str, int] = {}
        self._is_inverse: list[bool] = []
        self._inverse_partner: dict[int, int] = {}

    # -- entities ---------------------------------------------------------
    @property
    def n_entities(self) -> int:
        return len(self._entities)

    def add_entity(self, symbol: str) -> int:
        eid = self._entity_ids.get(symbol)
        if eid is None:
            eid = len(self._entities)
            self._entities.append(symbol)
            self._entity_ids[symbol] = eid
        return eid

    def entity_id(self, symbol: str) -> int:
        try:
            return self._entity_ids[symbol]
        except KeyError:
            raise ConsistencyError(f"unknown entity symbol: {symbol!r}") from None

    def entity_symbol(self, eid: int) -> str:
        return self._entities[eid]

    def has_entity(self, symbol: str) -> bool:
        return symbol in self._entity_ids

    @property
    def entities(self) -> list[str]:
        return list(self._entities)

    # -- relations --------------------------------------------------------
    @property
    def n_relations(self) -> int:
        return len(self._relations)

    def add_relation(self, symbol: str, is_inverse: bool = False) -> int:
        rid = self._relation_ids.get(symbol)
        if rid is None:
            rid = len(self._relations)
            self._relations.append(symbol)
            self._relation_ids[symbol] = rid
            self._is_inverse.append(is_inverse)
        return rid

    def relation_id(self, symbol: str) -> int:
        try:
            return self._relation_ids[symbol]
        except KeyError:
            raise ConsistencyError(f"unknown relation symbol: {symbol!r}") from None

    def relation_symbol(self, rid: int) -> str:
        return self._relations[rid]

    def has_relation(self, symbol: str) -> bool:
        return symbol in self._relation_ids

    def is_inverse(self, rid: int) -> bool:
        return self._is_inverse[rid]

    @property
    def relations(self) -> list[str]:
        return list(self._relations)

    def ensure_inverse(self, symbol: str) -> int:
        """Register (or fetch) the inverse partner of a base relation."""
        rid = self.relation_id(symbol)
        if self._is_inverse[rid]:
            raise ConsistencyError(f"{symbol!r} is already an inverse relation")
        partner = self._inverse_partner.get(rid)
        if partner is None:
            partner = self.add_relation(symbol + INVERSE_SUFFIX, is_inverse=True)
            self._inverse_partner[rid] = partner
            self._inverse_partner[partner] = rid
        return partner

    def inverse_id(self, rid: int) -> int | None:
        """The inverse partner of a relation id, if one is registered."""
        return self._inverse_partner.get(rid)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        inverse_of = {
            self._relations[base]: self._relations[inv]
            for base, inv in sorted(self._inverse_partner.items())
            if not self._is_inverse[base]
        }
        return {
            "entities": list(self._entities),
            "relations": list(self._relations),
            "inverse_of": inverse_of,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Vocabulary:
        vocab = cls()
        inverse_symbols = set(data.get("inverse_of", {}).values())
        for symbol in data["entities"]:
            vocab.add_entity(symbol)
        for symbol in data["relations"]:
            vocab.add_relation(symbol, is_inverse=symbol in inverse_symbols)
        for base, inv in data.get("inverse_of", {}).items():
            base_id = vocab.relation_id(base)
            inv_id = vocab.relation_id(inv)
            vocab._inverse_partner[base_id] = inv_id
            vocab._inverse_partner[inv_id] = base_id
        return vocab


def parse_fact_line(line: str, line_no: int, vocab: Vocabulary | None = None,
                    allow_null_tail: bool = False) -> HyperFact:
    """Parse one JSON fact record; extends ``vocab`` with unseen symbols."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise ParseError(line_no, "fact record must be a JSON object")
    missing = {"h", "r", "t", "q"} - record.keys()
    if missing:
        raise ParseError(line_no, f"missing keys: {sorted(missing)}")

    head, relation, tail, quals = record["h"], record["r"], record["t"], record["q"]
    if not isinstance(head, str) or not isinstance(relation, str):
        raise SchemaError(f"line {line_no}: 'h' and 'r' must be strings")
    if tail is None and not allow_null_tail:
        raise SchemaError(f"line {line_no}: 't' must be a string")
    if tail is not None and not isinstance(tail, str):
        raise SchemaError(f"line {line_no}: 't' must be a string")
    if not isinstance(quals, list):
        raise SchemaError(f"line {line_no}: 'q' must be a list of pairs")
    pairs = []
    for pair in quals:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise SchemaError(f"line {line_no}: qualifier pair must have length 2")
        attribute, value = pair
        if not isinstance(attribute, str) or not isinstance(value, str):
            raise SchemaError(f"line {line_no}: qualifier elements must be strings")
        pairs.append((attribute, value))

    fact = HyperFact(head, relation, tail, tuple(pairs))
    if vocab is not None:
        for symbol in fact.entities():
            vocab.add_entity(symbol)
        for symbol in fact.relations():
            vocab.add_relation(symbol)
    return fact


def parse_facts(stream: Iterable[str], vocab: Vocabulary | None = None,
                allow_null_tail: bool = False) -> list[HyperFact]:
    """Parse line-oriented JSON facts in file order.

    Blank lines are skipped.  Unseen symbols extend ``vocab`` in order of
    first appearance, which keeps id assignment deterministic.
    """
    facts = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        facts.append(parse_fact_line(line, line_no, vocab, allow_null_tail))
    return facts


def serialize_fact(fact: HyperFact) -> str:
    """One-line JSON with keys h, r, t, q; qualifiers in stored order."""
    record = {
        "h": fact.head,
        "r": fact.relation,
        "t": fact.tail,
        "q": [[a, v] for a, v in fact.qualifiers],
    }
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def write_facts(facts: Iterable[HyperFact], stream: IO[str]) -> None:
    for fact in facts:
        stream.write(serialize_fact(fact) + "\n")


def add_inverse_facts(facts: list[HyperFact], vocab: Vocabulary) -> list[HyperFact]:
    """Append the inverse of every fact: head/tail swapped, relation replaced
    by its ``__inv`` partner, qualifiers unchanged.

    Rejects input that already contains inverse relations, so augmentation
    cannot be applied twice.
    """
    for fact in facts:
        if vocab.has_relation(fact.relation) and vocab.is_inverse(vocab.relation_id(fact.relation)):
            raise ConsistencyError(
                f"facts already inverse-augmented: found relation {fact.relation!r}")
    augmented = list(facts)
    for fact in facts:
        if fact.tail is None:
            raise SchemaError("cannot invert a fact with no tail")
        inv_id = vocab.ensure_inverse(fact.relation)
        augmented.append(HyperFact(
            head=fact.tail,
            relation=vocab.relation_symbol(inv_id),
            tail=fact.head,
            qualifiers=fact.qualifiers,
        ))
    return augmented


@dataclass
class BackgroundIndex:
    """entity-id -> ids of (inverse-augmented) facts headed by that entity."""

    facts: list[HyperFact]
    vocab: Vocabulary
    buckets: dict[int, list[int]] = field(default_factory=dict)

    def fact_ids(self, entity_id: int) -> list[int]:
        return self.buckets.get(entity_id, [])

    @property
    def n_facts(self) -> int:
        return len(self.facts)


def build_background_index(background: list[HyperFact], vocab: Vocabulary) -> BackgroundIndex:
    """Index inverse-augmented background facts by head entity."""
    buckets: dict[int, list[int]] = {}
    for fid, fact in enumerate(background):
        for symbol in fact.entities():
            if not vocab.has_entity(symbol):
                raise ConsistencyError(f"background fact {fid} uses unknown entity {symbol!r}")
        for symbol in fact.relations():
            if not vocab.has_relation(symbol):
                raise ConsistencyError(f"background fact {fid} uses unknown relation {symbol!r}")
        buckets.setdefault(vocab.entity_id(fact.head), []).append(fid)
    return BackgroundIndex(facts=background, vocab=vocab, buckets=buckets)


def assert_no_leakage(background: BackgroundIndex | list[HyperFact], vocab: Vocabulary,
                      few_shot_relations: set[int]) -> None:
    """Raise ``LeakageError`` if any background fact mentions a few-shot
    relation (or its inverse) in relation or attribute position."""
    facts = background.facts if isinstance(background, BackgroundIndex) else background
    blocked = set(few_shot_relations)
    for rid in few_shot_relations:
        partner = vocab.inverse_id(rid)
        if partner is not None:
            blocked.add(partner)
    for fid, fact in enumerate(facts):
        for symbol in fact.relations():
            if vocab.has_relation(symbol) and vocab.relation_id(symbol) in blocked:
                raise LeakageError(
                    f"background fact {fid} ({serialize_fact(fact)}) "
                    f"mentions few-shot relation {symbol!r}")
