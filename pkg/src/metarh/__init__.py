"""Few-shot tail-entity prediction on hyper-relational knowledge graphs.

The pipeline: build a few-shot dataset from a fact corpus, train the
episodic model (background-enhanced entities, masked instance-graph
relation encoding, one-step support adjustment, translational scoring),
then evaluate or predict.
"""

from .builder import BuildConfig, BuiltDataset, build_dataset, write_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .estimator import MetaRH
from .exceptions import (BuildError, CheckpointError, ConfigError,
                         ConsistencyError, CorruptionError, DataError,
                         EpisodeError, EvaluationError, InputError,
                         LeakageError, MetaRHError, NumericError, ParseError,
                         SchemaError)
from .facts import (HyperFact, Vocabulary, add_inverse_facts, parse_facts,
                    serialize_fact, write_facts)
from .metrics import EvalReport, hits_at, mean_reciprocal_rank, summarize
from .model import MetaRHModule
from .sampling import Episode, eval_episode, sample_episode
from .store import IdFact, KnowledgeStore
from .synthetic import pattern_corpus, write_pattern_corpus
from .training import (TrainConfig, TrainResult, evaluate,
                       load_pretrained_embeddings, support_adapt, train)

__version__ = "0.1.0"

__all__ = [
    "BuildConfig", "BuiltDataset", "build_dataset", "write_dataset",
    "load_checkpoint", "save_checkpoint",
    "MetaRH",
    "BuildError", "CheckpointError", "ConfigError", "ConsistencyError",
    "CorruptionError", "DataError", "EpisodeError", "EvaluationError",
    "InputError", "LeakageError", "MetaRHError", "NumericError",
    "ParseError", "SchemaError",
    "HyperFact", "Vocabulary", "add_inverse_facts", "parse_facts",
    "serialize_fact", "write_facts",
    "EvalReport", "hits_at", "mean_reciprocal_rank", "summarize",
    "MetaRHModule",
    "Episode", "eval_episode", "sample_episode",
    "IdFact", "KnowledgeStore",
    "pattern_corpus", "write_pattern_corpus",
    "TrainConfig", "TrainResult", "evaluate", "load_pretrained_embeddings",
    "support_adapt", "train",
    "__version__",
]
