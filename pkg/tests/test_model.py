"""Episode-level model behaviour: stage wiring, ablation switches, ranking."""

import pytest
import torch

from metarh.encoder import DTYPE
from metarh.exceptions import ConfigError, EvaluationError
from metarh.model import MetaRHModule
from metarh.sampling import derive_rng, eval_episode, sample_episode
from metarh.scorer import pessimistic_rank

torch.set_num_threads(1)


def _model(store, seed=0, **kwargs):
    torch.manual_seed(seed)
    defaults = dict(dim=8, tau=0.6, margin=1.0, beta=0.1, depth=2, n_heads=2)
    defaults.update(kwargs)
    return MetaRHModule(store.vocab.n_entities, store.vocab.n_relations,
                        **defaults)


def _episode(store, relation="likes", split="train", k=3, seed=0):
    rel = store.vocab.relation_id(relation)
    return sample_episode(store, split, rel, k=k, query_batch=2,
                          background_cap=10, n_neg=2,
                          rng=derive_rng(seed, "test-episode"))


class TestConstruction:
    def test_bad_hyperparameters_rejected(self, tiny_store):
        n_e = tiny_store.vocab.n_entities
        n_r = tiny_store.vocab.n_relations
        with pytest.raises(ConfigError):
            MetaRHModule(n_e, n_r, dim=7)
        with pytest.raises(ConfigError):
            MetaRHModule(n_e, n_r, dim=8, margin=0.0)
        with pytest.raises(ConfigError):
            MetaRHModule(n_e, n_r, dim=8, beta=-0.1)
        with pytest.raises(ConfigError):
            MetaRHModule(0, n_r, dim=8)

    def test_config_round_trip(self, tiny_store):
        model = _model(tiny_store, depth=3, n_heads=4, tau=0.3,
                       first_order=True, share_fusion=False)
        clone = MetaRHModule.from_config(model.config())
        assert clone.config() == model.config()
        for (n1, p1), (n2, p2) in zip(model.named_parameters(),
                                      clone.named_parameters()):
            assert n1 == n2 and p1.shape == p2.shape


class TestPipeline:
    def test_task_relation_shape_and_grad(self, tiny_store):
        model = _model(tiny_store)
        ep = _episode(tiny_store)
        r_task = model.task_relation(ep, tiny_store)
        assert r_task.shape == (model.dim,)
        assert r_task.requires_grad

    def test_adjustment_takes_one_descent_step(self, tiny_store):
        model = _model(tiny_store)
        ep = _episode(tiny_store)
        r_task, r_adj = model.adjusted_relation(ep, tiny_store)
        before = model.support_loss(ep, r_task).item()
        after = model.support_loss(ep, r_adj.detach()).item()
        if before > 0:
            assert after <= before

    def test_episode_loss_backpropagates_everywhere(self, tiny_store):
        model = _model(tiny_store)
        ep = _episode(tiny_store)
        loss = model.episode_loss(ep, tiny_store)
        assert loss.item() >= 0
        loss.backward()
        for name, param in model.named_parameters():
            if name.startswith("fusion_proj"):
                continue        # unused while share_fusion is on
            assert param.grad is not None, name

    def test_unshared_fusion_uses_its_own_projection(self, tiny_store):
        model = _model(tiny_store, share_fusion=False)
        ep = _episode(tiny_store)
        loss = model.episode_loss(ep, tiny_store)
        loss.backward()
        grads = {name: p.grad for name, p in model.named_parameters()}
        assert grads["fusion_proj.weight"] is not None
        assert grads["fusion_proj.weight"].abs().sum() > 0

    def test_scores_use_raw_embeddings_not_enhanced(self, tiny_store):
        """The translational score reads embedding rows directly, so editing
        the background encoder must not move fact scores for a fixed
        relation vector."""
        model = _model(tiny_store)
        ep = _episode(tiny_store)
        fact = ep.queries[0]
        r = torch.randn(model.dim, dtype=DTYPE)
        before = model.fact_scores(fact, r, [fact.tail]).item()
        with torch.no_grad():
            model.background.proj.weight.add_(1.0)
        after = model.fact_scores(fact, r, [fact.tail]).item()
        assert before == after


class TestAblations:
    def test_no_adjustment_returns_task_relation(self, tiny_store):
        model = _model(tiny_store, use_adjustment=False)
        ep = _episode(tiny_store)
        r_task, r_adj = model.adjusted_relation(ep, tiny_store)
        assert r_adj is r_task

    def test_zero_beta_matches_no_adjustment_in_value(self, tiny_store):
        ep = _episode(tiny_store)
        ablated = _model(tiny_store, seed=3, use_adjustment=False)
        zero_step = _model(tiny_store, seed=3, beta=0.0)
        _, r_a = ablated.adjusted_relation(ep, tiny_store)
        _, r_z = zero_step.adjusted_relation(ep, tiny_store)
        torch.testing.assert_close(r_z, r_a, atol=1e-12, rtol=0)

    def test_no_background_uses_raw_rows_in_graphs(self, tiny_store):
        model = _model(tiny_store, use_background=False)
        ep = _episode(tiny_store)
        eid = ep.support[0].head
        out = model.enhance_entity(eid, ep.background_sample[eid], tiny_store)
        assert torch.equal(out, model.entity_emb.weight[eid])

    def test_background_changes_graph_inputs(self, tiny_store):
        full = _model(tiny_store, seed=5)
        ep = _episode(tiny_store)
        eid = ep.support[0].head
        enhanced = full.enhance_entity(eid, ep.background_sample[eid], tiny_store)
        raw = full.entity_emb.weight[eid]
        assert not torch.equal(enhanced, raw)


class TestRanking:
    def test_rank_query_agrees_with_direct_scoring(self, tiny_store):
        model = _model(tiny_store, seed=7)
        rel = tiny_store.vocab.relation_id("guides")
        ep = eval_episode(tiny_store, "test", rel, k=2, background_cap=10,
                          n_neg=1, rng=derive_rng(0, "rank"))
        _, r_adj = model.adjusted_relation(ep, tiny_store)
        for fact in ep.queries:
            candidates = tiny_store.candidates[rel]
            scores = model.fact_scores(fact, r_adj, candidates)
            index = {eid: i for i, eid in enumerate(candidates)}
            exclude = {index[t] for t in tiny_store.known_true_tails(fact)
                       if t != fact.tail and t in index}
            expected = pessimistic_rank(scores, index[fact.tail], exclude)
            assert model.rank_query(fact, r_adj, tiny_store) == expected

    def test_raw_ranks_at_least_match_filtered(self, tiny_store):
        model = _model(tiny_store, seed=8)
        rel = tiny_store.vocab.relation_id("guides")
        ep = eval_episode(tiny_store, "test", rel, k=2, background_cap=10,
                          n_neg=1, rng=derive_rng(1, "rank"))
        _, r_adj = model.adjusted_relation(ep, tiny_store)
        for fact in ep.queries:
            filtered = model.rank_query(fact, r_adj, tiny_store, filtered=True)
            raw = model.rank_query(fact, r_adj, tiny_store, filtered=False)
            assert raw >= filtered

    def test_missing_tail_in_candidates_raises(self, tiny_store):
        model = _model(tiny_store)
        rel = tiny_store.vocab.relation_id("guides")
        ep = eval_episode(tiny_store, "test", rel, k=2, background_cap=10,
                          n_neg=1, rng=derive_rng(2, "rank"))
        _, r_adj = model.adjusted_relation(ep, tiny_store)
        fact = ep.queries[0]._replace(tail=10 ** 6)
        with pytest.raises(EvaluationError):
            model.rank_query(fact, r_adj, tiny_store)
