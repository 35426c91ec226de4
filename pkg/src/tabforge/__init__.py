"""Training-data construction and validation for tabular manipulation
tasks: table parsing and canonical comparison, answer-consistency
checks over two generation routes, corpus assembly and mixing, model
and executor gateways, evaluation, and the statistical bounds that
justify agreement-based filtering.
"""

from .corpus import (
    AnswerPayload,
    Instance,
    Manifest,
    OperationTag,
    corpus_stats,
    load_corpus,
    mix_corpus,
    save_corpus,
)
from .crossval import (
    CandidateAnswer,
    ExtensionRecord,
    ValidationRecord,
    cross_way_validate,
    dual_code_validate,
    validate_extension,
)
from .evaluation import AccuracyReport, Verdict, accuracy, evaluate, meta_evaluate, parse_rating
from .gateway import (
    BatchPolicy,
    CompletionRequest,
    ExecutionRequest,
    ExecutionResult,
    StubCompletionClient,
    SubprocessExecutor,
    complete,
    drive_batch,
)
from .tables import (
    Table,
    canonicalize_table,
    exact_answer_match,
    parse_table,
    serialize_table,
    tables_exact_match,
    text_token_count,
    token_count,
)
from .textsim import cluster_by_threshold, majority_reference, rouge_l, similarity_matrix
from .theory import (
    AnswerModel,
    posterior_bound,
    simulate_consistency,
    verify_theorems,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerModel",
    "AnswerPayload",
    "AccuracyReport",
    "BatchPolicy",
    "CandidateAnswer",
    "CompletionRequest",
    "ExecutionRequest",
    "ExecutionResult",
    "ExtensionRecord",
    "Instance",
    "Manifest",
    "OperationTag",
    "StubCompletionClient",
    "SubprocessExecutor",
    "Table",
    "ValidationRecord",
    "Verdict",
    "accuracy",
    "canonicalize_table",
    "cluster_by_threshold",
    "complete",
    "corpus_stats",
    "cross_way_validate",
    "drive_batch",
    "dual_code_validate",
    "evaluate",
    "exact_answer_match",
    "load_corpus",
    "majority_reference",
    "meta_evaluate",
    "mix_corpus",
    "parse_rating",
    "parse_table",
    "posterior_bound",
    "rouge_l",
    "save_corpus",
    "serialize_table",
    "similarity_matrix",
    "simulate_consistency",
    "tables_exact_match",
    "text_token_count",
    "token_count",
    "validate_extension",
    "verify_theorems",
]
