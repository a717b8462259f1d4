"""End-to-end few-shot model: embeddings, both encoders, episode losses.

The forward path for one episode:

1. enhance each support head/tail with its sampled background facts,
2. encode every support instance graph and average the MASK readouts
   into a task relation vector,
3. take one gradient step on the support hinge loss (the adjustment),
4. score queries translationally with the adjusted relation, fusing each
   query's own qualifiers into the relation vector.

All tensors are float64 on CPU.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .encoder import DTYPE, BackgroundEncoder, qualifier_sum
from .exceptions import ConfigError, EvaluationError
from .relation import RelationEncoder, average_support, build_instance_graph
from .sampling import Episode
from .scorer import adjust, fuse_relation, hinge_loss, pessimistic_rank, transe_scores
from .store import IdFact, KnowledgeStore


def init_embedding(n_rows: int, dim: int) -> nn.Embedding:
    """Uniform rows at the usual translational-embedding scale, 6/sqrt(dim),
    so initial candidate distances are spread enough to carry gradient."""
    emb = nn.Embedding(n_rows, dim, dtype=DTYPE)
    bound = 6.0 / dim ** 0.5
    nn.init.uniform_(emb.weight, -bound, bound)
    return emb


class MetaRHModule(nn.Module):
    """Trainable module over a fixed vocabulary.

    ``use_background`` and ``use_adjustment`` switch off the corresponding
    pipeline stages without changing the parameter set, so ablated and full
    models share one checkpoint layout.  With ``share_fusion`` the qualifier
    projection used when scoring is the background encoder's; otherwise the
    scorer keeps its own.
    """

    def __init__(self, n_entities: int, n_relations: int, dim: int,
                 tau: float = 0.9, margin: float = 1.0, beta: float = 0.1,
                 depth: int = 2, n_heads: int = 2, activation: str = "tanh",
                 dropout: float = 0.0, hard_mask: bool = True,
                 first_order: bool = False,
                 use_background: bool = True, use_adjustment: bool = True,
                 share_fusion: bool = True, enhance_qualifier_values: bool = False):
        super().__init__()
        if n_entities < 1 or n_relations < 1:
            raise ConfigError("vocabulary must not be empty")
        if dim < 2 or dim % 2 != 0:
            raise ConfigError(f"dim must be a positive even number, got {dim}")
        if margin <= 0:
            raise ConfigError(f"margin must be positive, got {margin}")
        if beta < 0:
            raise ConfigError(f"step size beta must be non-negative, got {beta}")
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.dim = dim
        self.tau = tau
        self.margin = margin
        self.beta = beta
        self.activation = activation
        self.first_order = first_order
        self.use_background = use_background
        self.use_adjustment = use_adjustment
        self.share_fusion = share_fusion
        self.enhance_qualifier_values = enhance_qualifier_values

        self.entity_emb = init_embedding(n_entities, dim)
        self.relation_emb = init_embedding(n_relations, dim)
        self.background = BackgroundEncoder(dim, tau=tau, activation=activation)
        self.relation_encoder = RelationEncoder(dim, n_heads=n_heads,
                                                depth=depth, dropout=dropout,
                                                hard_mask=hard_mask)
        self.fusion_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)

    # -- configuration ------------------------------------------------------
    def config(self) -> dict:
        return {
            "n_entities": self.n_entities,
            "n_relations": self.n_relations,
            "dim": self.dim,
            "tau": self.tau,
            "margin": self.margin,
            "beta": self.beta,
            "depth": len(self.relation_encoder.blocks),
            "n_heads": self.relation_encoder.blocks[0].n_heads,
            "activation": self.activation,
            "dropout": float(self.relation_encoder.blocks[0].dropout.p),
            "hard_mask": self.relation_encoder.hard_mask,
            "first_order": self.first_order,
            "use_background": self.use_background,
            "use_adjustment": self.use_adjustment,
            "share_fusion": self.share_fusion,
            "enhance_qualifier_values": self.enhance_qualifier_values,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "MetaRHModule":
        return cls(**cfg)

    # -- embedding lookups ---------------------------------------------------
    def entity_vec(self, eid: int) -> Tensor:
        return self.entity_emb.weight[eid]

    def relation_vec(self, rid: int) -> Tensor:
        return self.relation_emb.weight[rid]

    def qualifier_pairs(self, fact: IdFact) -> list[tuple[Tensor, Tensor]]:
        return [(self.relation_vec(a), self.entity_vec(v))
                for a, v in fact.qualifiers]

    def qualifier_summary(self, fact: IdFact) -> Tensor:
        """Rotation-pooled summary of a fact's qualifiers (zero if none)."""
        return qualifier_sum(self.qualifier_pairs(fact), self.dim, DTYPE)

    def fused_qualifiers(self, fact: IdFact) -> Tensor:
        proj = self.background.qual_proj if self.share_fusion else self.fusion_proj
        return proj(self.qualifier_summary(fact))

    # -- background enhancement ----------------------------------------------
    def enhance_entity(self, eid: int, fact_ids: list[int],
                       store: KnowledgeStore) -> Tensor:
        """Entity representation for instance graphs.

        Without the background stage the raw embedding row is used directly.
        """
        entity = self.entity_vec(eid)
        if not self.use_background:
            return entity
        reprs = None
        if fact_ids:
            rows = []
            for fid in fact_ids:
                fact = store.background_fact(fid)
                rows.append(self.background.fact_repr(
                    self.relation_vec(fact.relation),
                    self.entity_vec(fact.tail),
                    self.qualifier_summary(fact)))
            reprs = torch.stack(rows)
        return self.background.enhance(entity, reprs)

    # -- relation inference ---------------------------------------------------
    def _graph_qualifiers(self, fact: IdFact, episode: Episode,
                          store: KnowledgeStore) -> list[tuple[Tensor, Tensor]]:
        if not self.enhance_qualifier_values:
            return self.qualifier_pairs(fact)
        return [
            (self.relation_vec(a),
             self.enhance_entity(v, episode.background_sample.get(v, []), store))
            for a, v in fact.qualifiers
        ]

    def task_relation(self, episode: Episode, store: KnowledgeStore) -> Tensor:
        """Average MASK readout over the episode's support instance graphs."""
        readouts = []
        for fact in episode.support:
            head = self.enhance_entity(
                fact.head, episode.background_sample.get(fact.head, []), store)
            tail = self.enhance_entity(
                fact.tail, episode.background_sample.get(fact.tail, []), store)
            graph = build_instance_graph(head, tail,
                                         self.relation_encoder.mask_token,
                                         self._graph_qualifiers(fact, episode, store))
            readouts.append(self.relation_encoder(graph))
        return average_support(readouts)

    # -- scoring ---------------------------------------------------------------
    def fact_scores(self, fact: IdFact, r_task: Tensor,
                    tail_ids: list[int]) -> Tensor:
        """Distances for one fact's head against the given tails, with the
        fact's qualifiers fused into the relation vector."""
        fused = fuse_relation(r_task, self.fused_qualifiers(fact), self.tau)
        tails = self.entity_emb.weight[torch.tensor(tail_ids, dtype=torch.long)]
        return transe_scores(self.entity_vec(fact.head), fused, tails)

    def _set_loss(self, facts: list[IdFact], negatives: list[list[int]],
                  r_task: Tensor) -> Tensor:
        pos = torch.stack([self.fact_scores(f, r_task, [f.tail])[0]
                           for f in facts])
        neg = torch.stack([self.fact_scores(f, r_task, negs)
                           for f, negs in zip(facts, negatives)])
        return hinge_loss(pos, neg, self.margin)

    def support_loss(self, episode: Episode, r_task: Tensor) -> Tensor:
        return self._set_loss(episode.support, episode.support_negatives, r_task)

    def adjusted_relation(self, episode: Episode,
                          store: KnowledgeStore) -> tuple[Tensor, Tensor]:
        """Task relation before and after the support-specific step."""
        r_task = self.task_relation(episode, store)
        if not self.use_adjustment:
            return r_task, r_task
        loss = self.support_loss(episode, r_task)
        return r_task, adjust(r_task, loss, self.beta,
                              first_order=self.first_order)

    def episode_loss(self, episode: Episode, store: KnowledgeStore) -> Tensor:
        """Query-set hinge loss with the adjusted relation."""
        _, r_adj = self.adjusted_relation(episode, store)
        return self._set_loss(episode.queries, episode.query_negatives, r_adj)

    # -- ranking -----------------------------------------------------------------
    def rank_query(self, fact: IdFact, r_adj: Tensor, store: KnowledgeStore,
                   filtered: bool = True) -> int:
        """Filtered pessimistic rank of the query's true tail among the
        relation's candidates."""
        candidates = store.candidates[fact.relation]
        index = {eid: i for i, eid in enumerate(candidates)}
        if fact.tail not in index:
            raise EvaluationError(
                f"true tail {fact.tail} missing from candidate set of "
                f"relation {fact.relation}")
        exclude: set[int] = set()
        if filtered:
            for other in store.known_true_tails(fact):
                if other != fact.tail and other in index:
                    exclude.add(index[other])
        scores = self.fact_scores(fact, r_adj, candidates)
        return pessimistic_rank(scores, index[fact.tail], exclude)
