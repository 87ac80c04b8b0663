"""fedbroker: resource selection for federated search.

Ranks candidate search resources for a query with an LLM yes/no logit
score or an embedding-similarity baseline, and turns a raw query log into
yes/no instruction-tuning data through LLM-judged synthetic relevance
labels, with graded-precision evaluation tooling on top.
"""

from .errors import FedbrokerError
from .evaluation import MetricReport, ResourceQrels, cohen_kappa, evaluate_run, ndcg_at_k, np_at_k
from .llm import GenerationResult, HttpBackend, LlmClient, MockBackend, TokenChoiceScore
from .model import (
    Judgment,
    JudgmentSource,
    Query,
    QueryKind,
    QueryLog,
    QueryOrigin,
    Resource,
    ResourceRanking,
    ResourceRegistry,
    SelectionMethod,
    Snippet,
    validate_registry,
)
from .prompting import (
    RenderedPrompt,
    RepresentationConfig,
    TemplateId,
    build_judging_prompt,
    build_querygen_prompt,
    build_selection_prompt,
)
from .selector import (
    EmbeddingIndex,
    SelectionRequest,
    build_embedding_index,
    embedding_score,
    hash_encoder,
    oracle_ranking,
    rank_resources,
    score_resource,
)
from .slat import (
    GradedWeights,
    PseudoLabel,
    SlatConfig,
    SlatResult,
    Target,
    TrainingExample,
    aggregate_resource_score,
    emit_training_examples,
    generate_conversational_query,
    graded_precision,
    parse_judgment,
    pseudo_label,
    run_slat_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "FedbrokerError",
    "MetricReport",
    "ResourceQrels",
    "cohen_kappa",
    "evaluate_run",
    "ndcg_at_k",
    "np_at_k",
    "GenerationResult",
    "HttpBackend",
    "LlmClient",
    "MockBackend",
    "TokenChoiceScore",
    "Judgment",
    "JudgmentSource",
    "Query",
    "QueryKind",
    "QueryLog",
    "QueryOrigin",
    "Resource",
    "ResourceRanking",
    "ResourceRegistry",
    "SelectionMethod",
    "Snippet",
    "validate_registry",
    "RenderedPrompt",
    "RepresentationConfig",
    "TemplateId",
    "build_judging_prompt",
    "build_querygen_prompt",
    "build_selection_prompt",
    "EmbeddingIndex",
    "SelectionRequest",
    "build_embedding_index",
    "embedding_score",
    "hash_encoder",
    "oracle_ranking",
    "rank_resources",
    "score_resource",
    "GradedWeights",
    "PseudoLabel",
    "SlatConfig",
    "SlatResult",
    "Target",
    "TrainingExample",
    "aggregate_resource_score",
    "emit_training_examples",
    "generate_conversational_query",
    "graded_precision",
    "parse_judgment",
    "pseudo_label",
    "run_slat_pipeline",
]
