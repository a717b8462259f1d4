"""Estimator-style front end: constructor hyper-parameters, fit, predict.

``MetaRH`` wraps the episodic trainer behind the familiar estimator
surface: every hyper-parameter is an ``__init__`` argument (so
``get_params``/``set_params``/``clone`` work), ``fit`` consumes a built
dataset, and fitted state lives in trailing-underscore attributes.
Prediction is episodic rather than row-wise, so ``predict`` takes a
support set alongside the queries.
"""

from __future__ import annotations

from pathlib import Path

import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import ConfigError, InputError
from .facts import HyperFact
from .sampling import derive_rng
from .scorer import sort_candidates
from .store import KnowledgeStore, to_id_fact
from .training import TrainConfig, evaluate, support_adapt, train


def _as_store(data) -> KnowledgeStore:
    if isinstance(data, KnowledgeStore):
        return data
    if isinstance(data, (str, Path)):
        return KnowledgeStore.load(data)
    raise ConfigError(
        f"expected a KnowledgeStore or a dataset directory, got {type(data).__name__}")


class MetaRH(BaseEstimator):
    """Few-shot tail predictor over hyper-relational facts."""

    def __init__(self, dim: int = 100, k: int = 5, task_batch: int = 128,
                 query_batch: int = 5, learning_rate: float = 1e-3,
                 background_cap: int = 50, margin: float = 1.0,
                 tau: float = 0.9, beta: float = 0.1, n_neg: int = 1,
                 depth: int = 2, n_heads: int = 2, activation: str = "tanh",
                 dropout: float = 0.0, hard_mask: bool = True,
                 first_order: bool = False, use_background: bool = True,
                 use_adjustment: bool = True, share_fusion: bool = True,
                 enhance_qualifier_values: bool = False, max_steps: int = 1000,
                 eval_every: int = 100, patience: int = 10, seed: int = 0,
                 pretrained_embeddings: str | None = None):
        self.dim = dim
        self.k = k
        self.task_batch = task_batch
        self.query_batch = query_batch
        self.learning_rate = learning_rate
        self.background_cap = background_cap
        self.margin = margin
        self.tau = tau
        self.beta = beta
        self.n_neg = n_neg
        self.depth = depth
        self.n_heads = n_heads
        self.activation = activation
        self.dropout = dropout
        self.hard_mask = hard_mask
        self.first_order = first_order
        self.use_background = use_background
        self.use_adjustment = use_adjustment
        self.share_fusion = share_fusion
        self.enhance_qualifier_values = enhance_qualifier_values
        self.max_steps = max_steps
        self.eval_every = eval_every
        self.patience = patience
        self.seed = seed
        self.pretrained_embeddings = pretrained_embeddings

    def _train_config(self) -> TrainConfig:
        return TrainConfig(**{name: getattr(self, name)
                              for name in TrainConfig.__dataclass_fields__})

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("this MetaRH instance is not fitted; call fit first")

    # -- estimator API ------------------------------------------------------
    def fit(self, X, y=None) -> "MetaRH":
        """Train on a built dataset (directory path or KnowledgeStore)."""
        store = _as_store(X)
        result = train(store, self._train_config())
        self.store_ = store
        self.model_ = result.model
        self.history_ = result.history
        self.steps_run_ = result.steps_run
        self.best_step_ = result.best_step
        self.best_valid_mrr_ = result.best_valid_mrr
        return self

    def predict(self, support: list[HyperFact], queries: list[HyperFact],
                candidates: list[str] | None = None,
                top_n: int = 10) -> list[list[tuple[str, float]]]:
        """Ranked (entity, score) lists, ascending score, one per query.

        ``support`` and ``queries`` must share a single relation; queries
        may carry ``tail=None``.  Candidates default to the dataset's set
        for that relation.
        """
        self._check_fitted()
        store = self.store_
        vocab = store.vocab
        id_support = [to_id_fact(f, vocab) for f in support]
        id_queries = [to_id_fact(f, vocab) for f in queries]
        if not id_support:
            raise InputError("prediction needs at least one support fact")
        if not id_queries:
            raise InputError("no queries given")
        relation = id_support[0].relation
        if any(f.relation != relation for f in id_support + id_queries):
            raise InputError("support and queries must share one relation")
        if candidates is not None:
            candidate_ids = [vocab.entity_id(s) for s in candidates]
        elif relation in store.candidates:
            candidate_ids = store.candidates[relation]
        else:
            raise InputError(
                f"no candidate set for relation "
                f"{vocab.relation_symbol(relation)!r}; pass candidates")
        cfg = self._train_config()
        rng = derive_rng(cfg.seed, "predict", relation)
        r_adj = support_adapt(self.model_, store, cfg, id_support,
                              candidate_ids, rng)
        out = []
        for query in id_queries:
            with torch.no_grad():
                scores = self.model_.fact_scores(query, r_adj, candidate_ids)
            ranked = sort_candidates(scores, candidate_ids)[:top_n]
            out.append([(vocab.entity_symbol(eid), score)
                        for eid, score in ranked])
        return out

    def evaluate(self, split: str = "test", macro: bool = False,
                 filtered: bool = True):
        self._check_fitted()
        return evaluate(self.model_, self.store_, split, self._train_config(),
                        macro=macro, filtered=filtered)

    def score(self, X=None, y=None) -> float:
        """Test-split MRR (higher is better), for scorer compatibility."""
        self._check_fitted()
        return self.evaluate("test").mrr

    # -- persistence --------------------------------------------------------
    def save(self, path: str | Path) -> None:
        self._check_fitted()
        save_checkpoint(self.model_, self.store_.hash(), path,
                        step=self.steps_run_,
                        extra={"train_config": self._train_config().to_dict()})

    @classmethod
    def load(cls, path: str | Path, data) -> "MetaRH":
        """Rebuild a fitted estimator from a checkpoint and its dataset."""
        store = _as_store(data)
        model, meta = load_checkpoint(path, expected_vocab_hash=store.hash())
        est = cls(**meta["extra"].get("train_config", {}))
        est.store_ = store
        est.model_ = model
        est.history_ = []
        est.steps_run_ = meta.get("step", 0)
        est.best_step_ = None
        est.best_valid_mrr_ = None
        return est
