"""Episodic training loop, validation-based selection, and evaluation.

Training samples a mini-batch of tasks per step, accumulates the query
losses of their episodes, and applies one Adam update over all parameters.
Validation MRR selects the best parameter state with early stopping.
Everything runs on one CPU thread in float64, so identical seeds give
identical loss trajectories.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .exceptions import ConfigError, NumericError, ParseError
from .facts import Vocabulary
from .metrics import EvalReport, summarize
from .model import MetaRHModule
from .sampling import (Episode, corrupt_tail, derive_rng, eval_episode,
                       sample_background, sample_episode)
from .store import IdFact, KnowledgeStore

logger = logging.getLogger("metarh.training")

GRIDS = {
    "dim": (50, 100),
    "task_batch": (128, 256, 512, 1024, 2048),
    "query_batch": (1, 2, 3, 4, 5),
    "learning_rate": (5e-3, 1e-3, 5e-4, 1e-4),
    "background_cap": (10, 20, 30, 50),
    "margin": (1.0, 2.0, 3.0, 4.0, 5.0),
    "tau": tuple(round(0.1 * i, 1) for i in range(11)),
}


@dataclass
class TrainConfig:
    """Hyper-parameters for one run.

    Values outside the tuned grids are allowed (explicit overrides) but are
    reported by ``grid_deviations`` and logged at validation time.
    """

    dim: int = 100
    k: int = 5
    task_batch: int = 128
    query_batch: int = 5
    learning_rate: float = 1e-3
    background_cap: int = 50
    margin: float = 1.0
    tau: float = 0.9
    beta: float = 0.1
    n_neg: int = 1
    depth: int = 2
    n_heads: int = 2
    activation: str = "tanh"
    dropout: float = 0.0
    hard_mask: bool = True
    first_order: bool = False
    use_background: bool = True
    use_adjustment: bool = True
    share_fusion: bool = True
    enhance_qualifier_values: bool = False
    max_steps: int = 1000
    eval_every: int = 100
    patience: int = 10
    seed: int = 0
    pretrained_embeddings: str | None = None

    def validate(self) -> None:
        if self.dim < 2 or self.dim % 2:
            raise ConfigError(f"dim must be a positive even number, got {self.dim}")
        if self.dim % self.n_heads:
            raise ConfigError(f"dim {self.dim} not divisible by n_heads {self.n_heads}")
        for name in ("k", "task_batch", "query_batch", "n_neg", "depth",
                     "n_heads", "max_steps", "eval_every", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.background_cap < 0:
            raise ConfigError(f"background_cap must be non-negative, got {self.background_cap}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in self.grid_deviations():
            logger.warning("config: %s=%r is outside the tuned grid %r",
                           name, getattr(self, name), GRIDS[name])

    def grid_deviations(self) -> list[str]:
        out = []
        for name, grid in GRIDS.items():
            value = getattr(self, name)
            if not any(abs(value - g) < 1e-12 for g in grid):
                out.append(name)
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def model_kwargs(self, store: KnowledgeStore) -> dict:
        return {
            "n_entities": store.n_entities,
            "n_relations": store.n_relations,
            "dim": self.dim,
            "tau": self.tau,
            "margin": self.margin,
            "beta": self.beta,
            "depth": self.depth,
            "n_heads": self.n_heads,
            "activation": self.activation,
            "dropout": self.dropout,
            "hard_mask": self.hard_mask,
            "first_order": self.first_order,
            "use_background": self.use_background,
            "use_adjustment": self.use_adjustment,
            "share_fusion": self.share_fusion,
            "enhance_qualifier_values": self.enhance_qualifier_values,
        }


def load_pretrained_embeddings(path: str | Path, vocab: Vocabulary,
                               model: MetaRHModule) -> dict:
    """Overwrite embedding rows for symbols found in a JSON-lines file.

    Each line holds {"symbol": str, "vec": [floats]}.  Symbols may name
    entities, relations, or both; unmatched rows keep their random
    initialization.  Returns and logs a coverage summary.
    """
    matched_entities = 0
    matched_relations = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict) or "symbol" not in record or "vec" not in record:
                raise ParseError(line_no, "expected {\"symbol\": ..., \"vec\": [...]}")
            symbol, vec = record["symbol"], record["vec"]
            if len(vec) != model.dim:
                raise ConfigError(
                    f"pretrained vector for {symbol!r} has dim {len(vec)}, "
                    f"model uses {model.dim}")
            row = torch.tensor(vec, dtype=torch.float64)
            with torch.no_grad():
                if vocab.has_entity(symbol):
                    model.entity_emb.weight[vocab.entity_id(symbol)] = row
                    matched_entities += 1
                if vocab.has_relation(symbol):
                    model.relation_emb.weight[vocab.relation_id(symbol)] = row
                    matched_relations += 1
    total_rows = model.n_entities + model.n_relations
    coverage = (matched_entities + matched_relations) / total_rows
    report = {
        "matched_entities": matched_entities,
        "matched_relations": matched_relations,
        "coverage": coverage,
    }
    logger.info("pretrained embeddings: %d entity rows, %d relation rows "
                "matched (coverage %.3f)", matched_entities, matched_relations,
                coverage)
    return report


@dataclass
class TrainResult:
    model: MetaRHModule
    steps_run: int
    history: list[dict] = field(default_factory=list)
    best_step: int | None = None
    best_valid_mrr: float | None = None


def _clone_state(model: MetaRHModule) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(store: KnowledgeStore, cfg: TrainConfig) -> TrainResult:
    """Run the episodic loop and return the best model found.

    The step loop: draw ``task_batch`` training relations with replacement,
    sample an episode per relation, sum the episode query losses, and take
    one Adam step.  The optimizer is skipped entirely when the batch loss
    is zero, so parameters change iff some task had positive loss.
    """
    cfg.validate()
    train_relations = store.split_relations("train")
    if not train_relations:
        raise ConfigError("no training relations in store")
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    model = MetaRHModule(**cfg.model_kwargs(store))
    if cfg.pretrained_embeddings:
        load_pretrained_embeddings(cfg.pretrained_embeddings, store.vocab, model)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    order_rng = derive_rng(cfg.seed, "task-order")

    has_validation = bool(store.split_relations("valid"))
    result = TrainResult(model=model, steps_run=0)
    best_state = None
    evals_since_best = 0
    nonfinite_streak = 0

    for step in range(1, cfg.max_steps + 1):
        batch = [train_relations[order_rng.randrange(len(train_relations))]
                 for _ in range(cfg.task_batch)]
        total = torch.zeros((), dtype=torch.float64)
        skipped = 0
        for slot, relation in enumerate(batch):
            rng = derive_rng(cfg.seed, "episode", step, slot, relation)
            episode = sample_episode(store, "train", relation, cfg.k,
                                     cfg.query_batch, cfg.background_cap,
                                     cfg.n_neg, rng)
            try:
                total = total + model.episode_loss(episode, store)
            except NumericError as exc:
                skipped += 1
                logger.warning("step %d: skipping episode for relation %s: %s",
                               step, store.vocab.relation_symbol(relation), exc)
        if not torch.isfinite(total):
            nonfinite_streak += 1
            logger.warning("step %d: non-finite batch loss, skipping update "
                           "(%d consecutive)", step, nonfinite_streak)
            if nonfinite_streak >= 3:
                raise NumericError("three consecutive non-finite training steps")
            continue
        nonfinite_streak = 0
        loss_value = float(total.detach())
        if loss_value > 0.0:
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
        result.steps_run = step
        entry = {"step": step, "loss": loss_value, "skipped_episodes": skipped}
        result.history.append(entry)

        if has_validation and step % cfg.eval_every == 0:
            report = evaluate(model, store, "valid", cfg)
            entry["valid_mrr"] = report.mrr
            logger.info("step %d: loss %.6f, valid MRR %.4f",
                        step, loss_value, report.mrr)
            # Ties keep the later state: hinge margins continue to widen
            # after the validation ranking saturates.
            if result.best_valid_mrr is None or report.mrr >= result.best_valid_mrr:
                result.best_valid_mrr = report.mrr
                result.best_step = step
                best_state = _clone_state(model)
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= cfg.patience:
                    logger.info("stopping at step %d: no validation improvement "
                                "in %d evaluations", step, cfg.patience)
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    return result


def support_adapt(model: MetaRHModule, store: KnowledgeStore, cfg: TrainConfig,
                  support: list[IdFact], candidates: list[int],
                  rng) -> torch.Tensor:
    """Infer and adjust the relation vector from a bare support set.

    This is the prediction-time path: no query losses, only the support
    episode feeding the encoders and the one-step adjustment.  Returns a
    detached vector.
    """
    if not support:
        raise ConfigError("support set must hold at least one fact")
    negatives = [
        corrupt_tail(f, candidates, store.known_true_tails(f), cfg.n_neg, rng)
        for f in support
    ]
    entities = []
    for fact in support:
        entities.extend((fact.head, fact.tail))
    episode = Episode(relation=support[0].relation, support=support,
                      queries=[], support_negatives=negatives,
                      query_negatives=[],
                      background_sample=sample_background(
                          store, entities, cfg.background_cap, rng))
    was_training = model.training
    saved_first_order = model.first_order
    model.eval()
    model.first_order = True
    try:
        _, r_adj = model.adjusted_relation(episode, store)
    finally:
        model.first_order = saved_first_order
        model.train(was_training)
    return r_adj.detach()


def evaluate(model: MetaRHModule, store: KnowledgeStore, split: str,
             cfg: TrainConfig, macro: bool = False,
             filtered: bool = True) -> EvalReport:
    """Rank every query of every relation in a split.

    Support sets are the first k facts in the dataset's stored order and the
    support-loss negatives come from a stream keyed by (seed, split,
    relation), so repeated evaluations are identical.
    """
    torch.set_num_threads(1)
    relations = store.split_relations(split)
    if not relations:
        raise ConfigError(f"split {split!r} has no relations")
    was_training = model.training
    saved_first_order = model.first_order
    model.eval()
    # the adjusted relation is only used as a value here, so skip building
    # the second-order graph
    model.first_order = True
    try:
        ranks_by_relation: dict[str, list[int]] = {}
        for relation in relations:
            rng = derive_rng(cfg.seed, "eval", split, relation)
            episode = eval_episode(store, split, relation, cfg.k,
                                   cfg.background_cap, cfg.n_neg, rng)
            _, r_adj = model.adjusted_relation(episode, store)
            r_adj = r_adj.detach()
            ranks = [model.rank_query(query, r_adj, store, filtered=filtered)
                     for query in episode.queries]
            ranks_by_relation[store.vocab.relation_symbol(relation)] = ranks
    finally:
        model.first_order = saved_first_order
        model.train(was_training)
    return summarize(ranks_by_relation, macro=macro)
