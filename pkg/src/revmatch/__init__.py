"""Cross-source reviewer matching: identity linkage, subject taxonomy,
candidate pools, a two-stage mixture-of-experts scorer, and ranking metrics."""

from .corpus import (
    Corpus,
    Publication,
    ReviewRecord,
    ScholarProfile,
    SourceId,
    compute_h_index,
    load_corpus,
    save_corpus,
)
from .errors import (
    CheckpointError,
    ConfigError,
    IntegrityError,
    ParseError,
    ProviderError,
    RevmatchError,
    TrainingDivergedError,
)
from .estimator import ExpertMixtureRecommender
from .linkage import LinkTable, link_sources
from .metrics import EvalReport, evaluate_suite
from .model import (
    ModelDims,
    MmoeModel,
    TrainConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train_two_stage,
)
from .pipeline import MissingPrerequisite, Paths, PipelineConfig, load_config, run_all, run_stage
from .pools import PoolConfig, build_pools_for_corpus, stratified_split
from .providers import ProviderConfig, TextServiceClient
from .taxonomy import Taxonomy, classify_corpus

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Corpus",
    "EvalReport",
    "ExpertMixtureRecommender",
    "IntegrityError",
    "LinkTable",
    "MissingPrerequisite",
    "MmoeModel",
    "ModelDims",
    "ParseError",
    "Paths",
    "PipelineConfig",
    "PoolConfig",
    "ProviderConfig",
    "ProviderError",
    "Publication",
    "ReviewRecord",
    "RevmatchError",
    "ScholarProfile",
    "SourceId",
    "Taxonomy",
    "TextServiceClient",
    "TrainConfig",
    "TrainingDivergedError",
    "build_pools_for_corpus",
    "classify_corpus",
    "compute_h_index",
    "evaluate_suite",
    "init_model",
    "link_sources",
    "load_checkpoint",
    "load_config",
    "load_corpus",
    "run_all",
    "run_stage",
    "save_checkpoint",
    "save_corpus",
    "stratified_split",
    "train_two_stage",
    "__version__",
]
