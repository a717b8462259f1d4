"""Episode sampling: RNG derivation, corruption, background draws."""

import pytest

from metarh.exceptions import CorruptionError, EpisodeError
from metarh.sampling import (Episode, corrupt_tail, derive_rng, eval_episode,
                             sample_background, sample_episode)
from metarh.store import IdFact

# chi-squared critical value at p = 0.01 for 9 degrees of freedom, frozen
# from a standard table before the uniformity test below was first run
CHI2_CRIT_DF9_P01 = 21.666


class TestDeriveRng:
    def test_same_parts_same_stream(self):
        a = derive_rng(3, "episode", 7, "rel_01")
        b = derive_rng(3, "episode", 7, "rel_01")
        assert [a.random() for _ in range(20)] == [b.random() for _ in range(20)]

    def test_distinct_parts_distinct_streams(self):
        streams = [
            derive_rng(3, "episode", 7),
            derive_rng(3, "episode", 8),
            derive_rng(4, "episode", 7),
            derive_rng(3, "eval", 7),
        ]
        draws = [tuple(s.random() for _ in range(5)) for s in streams]
        assert len(set(draws)) == len(draws)


class TestCorruptTail:
    FACT = IdFact(head=0, relation=0, tail=1, qualifiers=())

    def test_known_true_tails_never_drawn(self):
        rng = derive_rng(0, "corrupt")
        candidates = list(range(10))
        true = {1, 4, 7}
        for _ in range(200):
            for t in corrupt_tail(self.FACT, candidates, true, 3, rng):
                assert t in candidates and t not in true

    def test_exhausted_pool_raises(self):
        rng = derive_rng(0, "corrupt")
        with pytest.raises(CorruptionError):
            corrupt_tail(self.FACT, [1, 2], {1, 2}, 1, rng)

    def test_draws_are_uniform(self):
        # 11 candidates minus 1 true tail leaves 10 options; Pearson
        # statistic over 10_000 draws against the df=9 critical value
        rng = derive_rng(123, "uniform")
        candidates = list(range(11))
        counts = {c: 0 for c in candidates if c != 1}
        for _ in range(10_000):
            (t,) = corrupt_tail(self.FACT, candidates, {1}, 1, rng)
            counts[t] += 1
        expected = 10_000 / len(counts)
        chi2 = sum((n - expected) ** 2 / expected for n in counts.values())
        assert chi2 < CHI2_CRIT_DF9_P01


class TestBackgroundSampling:
    def test_small_buckets_used_whole(self, tiny_store):
        rng = derive_rng(0, "bg")
        eid = tiny_store.vocab.entity_id("e0")
        full = tiny_store.background.fact_ids(eid)
        sample = sample_background(tiny_store, [eid], cap=50, rng=rng)
        assert sample[eid] == list(full)

    def test_large_buckets_capped_without_replacement(self, tiny_store):
        eid = tiny_store.vocab.entity_id("e0")
        bucket = tiny_store.background.fact_ids(eid)
        assert len(bucket) >= 2
        sample = sample_background(tiny_store, [eid], cap=1,
                                   rng=derive_rng(0, "bg"))
        assert len(sample[eid]) == 1
        assert set(sample[eid]) <= set(bucket)

    def test_repeat_entities_sampled_once(self, tiny_store):
        eid = tiny_store.vocab.entity_id("e0")
        rng = derive_rng(0, "bg")
        sample = sample_background(tiny_store, [eid, eid], cap=1, rng=rng)
        assert list(sample) == [eid]


class TestEpisodes:
    def _rel(self, store, symbol):
        return store.vocab.relation_id(symbol)

    def test_episode_rejects_mixed_relations(self):
        a = IdFact(0, 0, 1, ())
        b = IdFact(0, 1, 2, ())
        with pytest.raises(EpisodeError, match="mixes relations"):
            Episode(relation=0, support=[a], queries=[b],
                    support_negatives=[[2]], query_negatives=[[1]])

    def test_episode_rejects_support_query_overlap(self):
        a = IdFact(0, 0, 1, ())
        with pytest.raises(EpisodeError, match="overlap"):
            Episode(relation=0, support=[a], queries=[a],
                    support_negatives=[[2]], query_negatives=[[2]])

    def test_sampled_episode_shapes_and_disjointness(self, tiny_store):
        rel = self._rel(tiny_store, "likes")
        ep = sample_episode(tiny_store, "train", rel, k=3, query_batch=2,
                            background_cap=10, n_neg=2,
                            rng=derive_rng(1, "ep"))
        assert len(ep.support) == 3
        assert len(ep.queries) == 2
        assert not set(ep.support) & set(ep.queries)
        assert [len(n) for n in ep.support_negatives] == [2, 2, 2]
        assert [len(n) for n in ep.query_negatives] == [2, 2]
        for fact in ep.support:
            assert fact.head in ep.background_sample
            assert fact.tail in ep.background_sample

    def test_sampled_episode_is_reproducible(self, tiny_store):
        rel = self._rel(tiny_store, "likes")
        eps = [
            sample_episode(tiny_store, "train", rel, k=3, query_batch=2,
                           background_cap=10, n_neg=1, rng=derive_rng(5, "e"))
            for _ in range(2)
        ]
        assert eps[0] == eps[1]

    def test_query_batch_clipped_to_remainder(self, tiny_store):
        rel = self._rel(tiny_store, "likes")
        ep = sample_episode(tiny_store, "train", rel, k=5, query_batch=99,
                            background_cap=10, n_neg=1,
                            rng=derive_rng(0, "clip"))
        assert len(ep.queries) == 1      # 6 facts total, 5 in support

    def test_oversized_k_rejected(self, tiny_store):
        rel = self._rel(tiny_store, "likes")
        with pytest.raises(EpisodeError, match="need more than"):
            sample_episode(tiny_store, "train", rel, k=6, query_batch=1,
                           background_cap=10, n_neg=1,
                           rng=derive_rng(0, "big"))

    def test_eval_support_is_stored_order_prefix(self, tiny_store):
        rel = self._rel(tiny_store, "guides")
        facts = tiny_store.relation_facts("test", rel)
        ep = eval_episode(tiny_store, "test", rel, k=2, background_cap=10,
                          n_neg=1, rng=derive_rng(0, "eval"))
        assert ep.support == facts[:2]
        assert ep.queries == facts[2:]

    def test_background_covers_support_entities_only(self, tiny_store):
        rel = self._rel(tiny_store, "guides")
        ep = eval_episode(tiny_store, "test", rel, k=2, background_cap=10,
                          n_neg=1, rng=derive_rng(0, "eval"))
        allowed = set()
        for fact in ep.support:
            allowed.add(fact.head)
            allowed.add(fact.tail)
        assert set(ep.background_sample) == allowed
