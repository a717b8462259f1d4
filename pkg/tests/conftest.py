"""Shared fixtures: a hand-built miniature store and the synthetic benchmark.

The expensive fixtures (built synthetic dataset, trained benchmark models)
are session-scoped and lazy, so unit-test runs stay fast.
"""

from __future__ import annotations

import time

import pytest
import torch

from metarh.builder import BuildConfig, build_dataset, write_dataset
from metarh.facts import HyperFact, Vocabulary
from metarh.store import KnowledgeStore
from metarh.synthetic import pattern_corpus
from metarh.training import TrainConfig, evaluate, train

torch.set_num_threads(1)


def _fact(h, r, t, q=()):
    return HyperFact(h, r, t, tuple(q))


TINY_TASKS = {
    "train": {
        "likes": [
            _fact("e0", "likes", "e1", [("since", "e7")]),
            _fact("e1", "likes", "e2"),
            _fact("e2", "likes", "e3", [("since", "e7"), ("at", "e8")]),
            _fact("e3", "likes", "e4"),
            _fact("e4", "likes", "e5", [("at", "e9")]),
            _fact("e5", "likes", "e6"),
        ],
    },
    "valid": {
        "visits": [
            _fact("e0", "visits", "e2"),
            _fact("e1", "visits", "e3", [("at", "e8")]),
            _fact("e2", "visits", "e4"),
            _fact("e3", "visits", "e5"),
        ],
    },
    "test": {
        "guides": [
            _fact("e6", "guides", "e0"),
            _fact("e7", "guides", "e1", [("since", "e9")]),
            _fact("e8", "guides", "e2"),
            _fact("e9", "guides", "e3"),
        ],
    },
}

TINY_BACKGROUND = [
    _fact("e0", "near", "e5"),
    _fact("e1", "near", "e6", [("since", "e7")]),
    _fact("e2", "owns", "e8"),
    _fact("e3", "near", "e9"),
    _fact("e5", "owns", "e0", [("at", "e8"), ("since", "e7")]),
    _fact("e7", "owns", "e2"),
]


def make_tiny_store(check_leakage: bool = True) -> KnowledgeStore:
    """Ten entities, three single-relation splits, modest background."""
    vocab = Vocabulary()
    for i in range(10):
        vocab.add_entity(f"e{i}")
    for split_tasks in TINY_TASKS.values():
        for facts in split_tasks.values():
            for fact in facts:
                for r in fact.relations():
                    vocab.add_relation(r)
    for fact in TINY_BACKGROUND:
        for r in fact.relations():
            vocab.add_relation(r)
    entities = [f"e{i}" for i in range(10)]
    candidates = {rel: entities
                  for split_tasks in TINY_TASKS.values()
                  for rel in split_tasks}
    return KnowledgeStore.from_facts(vocab, TINY_TASKS, candidates,
                                     list(TINY_BACKGROUND),
                                     check_leakage=check_leakage)


@pytest.fixture
def tiny_store() -> KnowledgeStore:
    return make_tiny_store()


@pytest.fixture(scope="session")
def synthetic_corpus():
    return pattern_corpus()


@pytest.fixture(scope="session")
def synthetic_built(synthetic_corpus):
    return build_dataset(synthetic_corpus, BuildConfig(rng_seed=7))


@pytest.fixture(scope="session")
def synthetic_dir(synthetic_built, tmp_path_factory):
    path = tmp_path_factory.mktemp("synthetic") / "dataset"
    write_dataset(synthetic_built, path)
    return path


@pytest.fixture(scope="session")
def synthetic_store(synthetic_dir) -> KnowledgeStore:
    return KnowledgeStore.load(synthetic_dir)


def benchmark_config(seed: int, **overrides) -> TrainConfig:
    """Training setup for the synthetic benchmark runs."""
    params = dict(
        dim=50,
        k=5,
        task_batch=8,
        query_batch=5,
        learning_rate=5e-3,
        background_cap=10,
        margin=1.0,
        tau=0.5,
        beta=0.1,
        n_neg=2,
        max_steps=500,
        eval_every=50,
        patience=10,
        seed=seed,
    )
    params.update(overrides)
    return TrainConfig(**params)


BENCHMARK_SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def benchmark_runs(synthetic_store):
    """Full-model training runs on the synthetic benchmark, one per seed.

    Returns {seed: (result, train_report, test_report, seconds)} where
    seconds covers training plus both evaluations.
    """
    runs = {}
    for seed in BENCHMARK_SEEDS:
        cfg = benchmark_config(seed)
        started = time.monotonic()
        result = train(synthetic_store, cfg)
        train_report = evaluate(result.model, synthetic_store, "train", cfg)
        test_report = evaluate(result.model, synthetic_store, "test", cfg)
        seconds = time.monotonic() - started
        runs[seed] = (result, train_report, test_report, seconds)
    return runs


@pytest.fixture(scope="session")
def ablation_runs(synthetic_store):
    """Test-split reports for the two ablated configurations per seed.

    Returns {"adjustment": {seed: report}, "background": {seed: report}}.
    """
    reports = {"adjustment": {}, "background": {}}
    for name, flag in (("adjustment", "use_adjustment"),
                       ("background", "use_background")):
        for seed in BENCHMARK_SEEDS:
            cfg = benchmark_config(seed, **{flag: False})
            result = train(synthetic_store, cfg)
            reports[name][seed] = evaluate(result.model, synthetic_store,
                                           "test", cfg)
    return reports
