"""Stage-wise failure attribution and metric aggregation.

Every trace is checked against its ground truth stage by stage; a failed
case is blamed on exactly one stage under first-failure precedence
(intent, then routing, then recall, then ranking). Aggregation folds the
verdicts into per-policy rates, blame counts, latency percentiles, and
token cost relative to ChainOfThought.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .budget import PolicyId, relative_cost_from_totals
from .embedding import cosine, embed_text
from .index import Asset, CONTENT_TYPES
from .pipeline import STAGES, PipelineTrace, ndcg_at_k

DEFAULT_TAU_INTENT = 0.7


class EmptyInput(ValueError):
    """An aggregate operation received no samples."""


class Outcome(str, Enum):
    PASS = "Pass"
    INTENT_FAILURE = "IntentFailure"
    ROUTING_FAILURE = "RoutingFailure"
    RECALL_FAILURE = "RecallFailure"
    RANKING_FAILURE = "RankingFailure"


FAILURE_OUTCOMES = (
    Outcome.INTENT_FAILURE,
    Outcome.ROUTING_FAILURE,
    Outcome.RECALL_FAILURE,
    Outcome.RANKING_FAILURE,
)


@dataclass(frozen=True)
class GroundTruth:
    expected_subprompt: str
    expected_content_type: str
    expect_assets: bool = True
    expected_best_asset_id: str | None = None

    def __post_init__(self):
        if self.expected_content_type not in CONTENT_TYPES:
            raise ValueError(
                f"expected content type {self.expected_content_type!r} not in taxonomy"
            )


@dataclass(frozen=True)
class Evidence:
    intent_similarity: float | None = None
    intent_match: bool | None = None
    routed_type: str | None = None
    routing_exact: bool | None = None
    routing_with_fallback: bool | None = None
    fallback_used: bool = False
    hit_count: int | None = None
    ndcg5: float | None = None
    displacement: bool | None = None


@dataclass(frozen=True)
class AttributionVerdict:
    case_id: str
    policy: PolicyId
    outcome: Outcome
    evidence: Evidence


# ---------------------------------------------------------------------------
# Stage checks
# ---------------------------------------------------------------------------


def check_intent(
    predicted_subprompt: str, truth: GroundTruth, tau: float = DEFAULT_TAU_INTENT
) -> tuple[bool, float]:
    """Semantic match between predicted and expected subprompt."""
    similarity = cosine(
        embed_text(predicted_subprompt), embed_text(truth.expected_subprompt)
    )
    return similarity >= tau, similarity


def check_routing(
    routed_type: str, ranked_types: Sequence[str], truth: GroundTruth
) -> tuple[bool, bool]:
    """Exact match on the primary route; recovery via the fallback list."""
    exact = routed_type == truth.expected_content_type
    with_fallback = truth.expected_content_type in ranked_types
    return exact, with_fallback


def check_ranking(
    trace: PipelineTrace, assets: Mapping[str, Asset]
) -> tuple[float, bool]:
    """NDCG@5 over similarity grades plus best-match displacement.

    Negative similarities carry no ranking gain and are graded 0.
    """
    qvec = embed_text(trace.response.subprompt)
    relevances = [
        max(0.0, cosine(qvec, embed_text(assets[asset_id].caption)))
        for asset_id, _ in trace.ranked_assets
    ]
    ndcg5 = ndcg_at_k(relevances, 5)
    best_rank = max(range(len(relevances)), key=lambda i: (relevances[i], -i))
    return ndcg5, best_rank != 0


def _stage_completed(trace: PipelineTrace, stage: str) -> bool:
    if trace.error_stage is None:
        return True
    return STAGES.index(stage) < STAGES.index(trace.error_stage)


def attribute(
    trace: PipelineTrace,
    truth: GroundTruth,
    *,
    assets: Mapping[str, Asset],
    tau: float = DEFAULT_TAU_INTENT,
) -> AttributionVerdict:
    """Blame a failed case on the first failed stage; errors blame their stage."""
    intent_similarity = intent_match = None
    if trace.response is not None:
        intent_match, intent_similarity = check_intent(
            trace.response.subprompt, truth, tau
        )
    routing_exact = routing_with_fallback = None
    if trace.routed_type is not None:
        routing_exact, routing_with_fallback = check_routing(
            trace.routed_type, trace.ranked_types, truth
        )
    hit_count = len(trace.candidates) if _stage_completed(trace, "recall") else None
    ndcg5 = displacement = None
    if _stage_completed(trace, "ranking"):
        if trace.ranked_assets:
            ndcg5, displacement = check_ranking(trace, assets)
        else:
            displacement = False

    if intent_match is not True:
        outcome = Outcome.INTENT_FAILURE
    elif routing_with_fallback is not True:
        outcome = Outcome.ROUTING_FAILURE
    elif trace.error_stage == "recall":
        outcome = Outcome.RECALL_FAILURE
    elif truth.expect_assets and hit_count == 0:
        outcome = Outcome.RECALL_FAILURE
    elif trace.error_stage == "ranking":
        outcome = Outcome.RANKING_FAILURE
    elif displacement is True:
        outcome = Outcome.RANKING_FAILURE
    else:
        outcome = Outcome.PASS

    return AttributionVerdict(
        case_id=trace.case_id,
        policy=trace.policy,
        outcome=outcome,
        evidence=Evidence(
            intent_similarity=intent_similarity,
            intent_match=intent_match,
            routed_type=trace.routed_type,
            routing_exact=routing_exact,
            routing_with_fallback=routing_with_fallback,
            fallback_used=trace.fallback_used,
            hit_count=hit_count,
            ndcg5=ndcg5,
            displacement=displacement,
        ),
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyReport:
    policy: PolicyId
    case_count: int
    intent_match_rate: float
    routing_success_rate: float
    routing_with_fallback_rate: float
    fallback_gain: float
    recall_success_rate: float
    mean_ndcg5: float
    overall_success_rate: float
    blame: dict[str, int]
    latency_p50_ms: float
    latency_p95_ms: float
    latency_p99_ms: float
    mean_tokens_in: float
    mean_tokens_out: float
    rel_cost: float | None


@dataclass(frozen=True)
class EvaluationReport:
    policies: tuple[PolicyReport, ...]


def _trace_tokens(trace: PipelineTrace) -> tuple[int, int]:
    tokens_in = tokens_out = 0
    for bundle in (trace.bundle, trace.stage1_bundle):
        if bundle is not None:
            tokens_in += bundle.tokens_in
            tokens_out += bundle.tokens_out_observed
    return tokens_in, tokens_out


def aggregate(
    verdicts: Sequence[AttributionVerdict],
    traces: Sequence[PipelineTrace],
    policy_order: Sequence[PolicyId] | None = None,
) -> EvaluationReport:
    """Fold verdicts and traces into one report row per policy.

    Inputs may arrive in any order; aggregation sorts by case id so the
    output is byte-identical regardless of execution interleaving.
    """
    from .harness import percentile  # deferred: harness also imports this module

    if not verdicts:
        raise EmptyInput("no verdicts to aggregate")
    trace_map = {(t.case_id, t.policy): t for t in traces}
    by_policy: dict[PolicyId, list[AttributionVerdict]] = defaultdict(list)
    for verdict in verdicts:
        if (verdict.case_id, verdict.policy) not in trace_map:
            raise ValueError(
                f"verdict without trace: ({verdict.case_id}, {verdict.policy.value})"
            )
        by_policy[verdict.policy].append(verdict)

    if policy_order is None:
        policy_order = sorted(by_policy, key=lambda p: p.value)

    rows: list[dict] = []
    mean_totals: dict[PolicyId, float] = {}
    for policy in policy_order:
        batch = sorted(by_policy.get(policy, ()), key=lambda v: v.case_id)
        if not batch:
            raise EmptyInput(f"no verdicts for policy {policy.value}")
        n = len(batch)
        intent_ok = sum(1 for v in batch if v.evidence.intent_match is True)
        exact_ok = sum(1 for v in batch if v.evidence.routing_exact is True)
        fb_ok = sum(1 for v in batch if v.evidence.routing_with_fallback is True)
        recall_ok = sum(1 for v in batch if (v.evidence.hit_count or 0) > 0)
        passes = sum(1 for v in batch if v.outcome is Outcome.PASS)
        ndcgs = [v.evidence.ndcg5 for v in batch if v.evidence.ndcg5 is not None]
        mean_ndcg = 100.0 * sum(ndcgs) / len(ndcgs) if ndcgs else 100.0
        blame = Counter(v.outcome for v in batch if v.outcome is not Outcome.PASS)
        policy_traces = [trace_map[(v.case_id, v.policy)] for v in batch]
        latencies = [t.total_ms for t in policy_traces]
        token_pairs = [_trace_tokens(t) for t in policy_traces]
        mean_in = sum(p[0] for p in token_pairs) / n
        mean_out = sum(p[1] for p in token_pairs) / n
        mean_totals[policy] = mean_in + mean_out
        rows.append(
            dict(
                policy=policy,
                case_count=n,
                intent_match_rate=100.0 * intent_ok / n,
                routing_success_rate=100.0 * exact_ok / n,
                routing_with_fallback_rate=100.0 * fb_ok / n,
                fallback_gain=100.0 * fb_ok / n - 100.0 * exact_ok / n,
                recall_success_rate=100.0 * recall_ok / n,
                mean_ndcg5=mean_ndcg,
                overall_success_rate=100.0 * passes / n,
                blame={o.value: blame.get(o, 0) for o in FAILURE_OUTCOMES},
                latency_p50_ms=percentile(latencies, 50),
                latency_p95_ms=percentile(latencies, 95),
                latency_p99_ms=percentile(latencies, 99),
                mean_tokens_in=mean_in,
                mean_tokens_out=mean_out,
            )
        )

    if PolicyId.CHAIN_OF_THOUGHT in mean_totals:
        rel = relative_cost_from_totals(mean_totals)
    else:
        rel = {policy: None for policy in mean_totals}
    reports = tuple(
        PolicyReport(rel_cost=rel[row["policy"]], **row) for row in rows
    )
    return EvaluationReport(policies=reports)


# ---------------------------------------------------------------------------
# Wire formats
# ---------------------------------------------------------------------------


def verdict_to_record(verdict: AttributionVerdict) -> dict:
    ev = verdict.evidence
    return {
        "caseId": verdict.case_id,
        "policy": verdict.policy.value,
        "outcome": verdict.outcome.value,
        "evidence": {
            "intentSimilarity": ev.intent_similarity,
            "intentMatch": ev.intent_match,
            "routedType": ev.routed_type,
            "routingExact": ev.routing_exact,
            "routingWithFallback": ev.routing_with_fallback,
            "fallbackUsed": ev.fallback_used,
            "hitCount": ev.hit_count,
            "ndcg5": ev.ndcg5,
            "displacement": ev.displacement,
        },
    }


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "policies": [
            {
                "policy": row.policy.value,
                "caseCount": row.case_count,
                "intentMatchRate": row.intent_match_rate,
                "routingSuccessRate": row.routing_success_rate,
                "routingWithFallbackRate": row.routing_with_fallback_rate,
                "fallbackGain": row.fallback_gain,
                "recallSuccessRate": row.recall_success_rate,
                "meanNdcg5": row.mean_ndcg5,
                "overallSuccessRate": row.overall_success_rate,
                "blameDistribution": dict(row.blame),
                "latencyP50Ms": row.latency_p50_ms,
                "latencyP95Ms": row.latency_p95_ms,
                "latencyP99Ms": row.latency_p99_ms,
                "meanTokensIn": row.mean_tokens_in,
                "meanTokensOut": row.mean_tokens_out,
                "relCost": row.rel_cost,
            }
            for row in report.policies
        ]
    }


def report_from_dict(data: dict) -> EvaluationReport:
    rows = []
    for row in data["policies"]:
        rows.append(
            PolicyReport(
                policy=PolicyId(row["policy"]),
                case_count=row["caseCount"],
                intent_match_rate=row["intentMatchRate"],
                routing_success_rate=row["routingSuccessRate"],
                routing_with_fallback_rate=row["routingWithFallbackRate"],
                fallback_gain=row["fallbackGain"],
                recall_success_rate=row["recallSuccessRate"],
                mean_ndcg5=row["meanNdcg5"],
                overall_success_rate=row["overallSuccessRate"],
                blame=dict(row["blameDistribution"]),
                latency_p50_ms=row["latencyP50Ms"],
                latency_p95_ms=row["latencyP95Ms"],
                latency_p99_ms=row["latencyP99Ms"],
                mean_tokens_in=row["meanTokensIn"],
                mean_tokens_out=row["meanTokensOut"],
                rel_cost=row["relCost"],
            )
        )
    return EvaluationReport(policies=tuple(rows))
