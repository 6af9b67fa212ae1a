"""Collaborative speculative decoding.

A draft model proposes token sequences, an assistant model verifies every
position in parallel, and a per-token policy (thresholds on the two
probabilities, a trained decision tree, or the classic speculative ratio
test) decides whether to keep each draft token or substitute the
assistant's, fusing the knowledge of both models at inference time.
"""

from .backends import (
    Backend,
    Distribution,
    HttpBackend,
    NgramModel,
    Prediction,
    TableBackend,
    load_ngram,
    load_table,
    peaked,
    save_ngram,
    save_table,
    train_ngram,
    uniform,
)
from .engine import (
    EngineConfig,
    FusionTrace,
    RunMetrics,
    StepRecord,
    generate,
    generate_average,
    greedy_decode,
    read_trace,
    render_trace,
    write_trace,
)
from .exceptions import (
    BackendUnavailableError,
    ConfigError,
    CosdError,
    GenerationAborted,
    InvalidTokenError,
    MalformedFileError,
    UnknownSymbolError,
    UnsupportedOperationError,
    VocabularyMismatchError,
)
from .tokenizers import Tokenizer, bridge, load_tokenizer, save_tokenizer
from .tree import (
    DecisionTreeVerifier,
    LabeledSample,
    build_dataset,
    load_tree,
    read_tree,
    save_tree,
    train_tree,
    write_tree,
)
from .verification import (
    AveragePolicy,
    Decision,
    DecisionReason,
    RuleParams,
    RulePolicy,
    SpeculativePolicy,
    TreePolicy,
    VerifierPolicy,
    decide,
    verify_average,
    verify_rule,
    verify_speculative,
    verify_tree,
)

__version__ = "0.1.0"

__all__ = [
    "AveragePolicy",
    "Backend",
    "BackendUnavailableError",
    "ConfigError",
    "CosdError",
    "Decision",
    "DecisionReason",
    "DecisionTreeVerifier",
    "Distribution",
    "EngineConfig",
    "FusionTrace",
    "GenerationAborted",
    "HttpBackend",
    "InvalidTokenError",
    "LabeledSample",
    "MalformedFileError",
    "NgramModel",
    "Prediction",
    "RuleParams",
    "RulePolicy",
    "RunMetrics",
    "SpeculativePolicy",
    "StepRecord",
    "TableBackend",
    "Tokenizer",
    "TreePolicy",
    "UnknownSymbolError",
    "UnsupportedOperationError",
    "VerifierPolicy",
    "VocabularyMismatchError",
    "bridge",
    "build_dataset",
    "decide",
    "generate",
    "generate_average",
    "greedy_decode",
    "load_ngram",
    "load_table",
    "load_tokenizer",
    "load_tree",
    "peaked",
    "read_trace",
    "read_tree",
    "render_trace",
    "save_ngram",
    "save_table",
    "save_tokenizer",
    "save_tree",
    "train_ngram",
    "train_tree",
    "uniform",
    "verify_average",
    "verify_rule",
    "verify_speculative",
    "verify_tree",
    "write_trace",
    "write_tree",
]
