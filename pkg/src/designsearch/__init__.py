"""Canvas-grounded asset search: pipeline, prompt budgeting, attribution."""

from .attribution import (
    AttributionVerdict,
    EvaluationReport,
    GroundTruth,
    Outcome,
    aggregate,
    attribute,
    check_intent,
    check_ranking,
    check_routing,
)
from .budget import (
    PolicyId,
    PromptBundle,
    Shot,
    ShotBank,
    build_bundle,
    estimate_tokens,
    relative_cost,
)
from .config import PipelineConfig
from .embedding import DIM, cosine, embed_text
from .gdr import (
    GdrDocument,
    GdrSummary,
    TargetScope,
    compress_gdr,
    parse_gdr,
    resolve_scope,
    serialize_context,
    serialize_gdr,
    validate_gdr,
)
from .harness import RunConfig, load_run_config, percentile, run_evaluation
from .index import Asset, Candidate, DualIndex, ingest_corpus, is_zero_hit, recall
from .pipeline import (
    ModelResponse,
    PipelineDeps,
    PipelineTrace,
    QueryCase,
    StubClient,
    ndcg_at_k,
    preprocess,
    rerank,
    route,
    run_case,
)

__version__ = "0.1.0"
