"""Five-stage query pipeline: pre-process, intent, routing, recall, ranking.

Each case produces a full trace with per-stage wall-clock timings, the
assembled prompt bundle, the model response, recall candidates, and the
final ranked assets. The intent model is reached through a small client
interface; the bundled stub is deterministic and scriptable so whole
evaluations replay bit-for-bit.
"""

from __future__ import annotations

import json
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Protocol

from .budget import (
    PolicyId,
    PromptBundle,
    ShotBank,
    build_bundle,
    bundle_tokens_in,
    estimate_tokens,
    load_system_prompts,
)
from .config import DEFAULT_FALLBACKS, PipelineConfig
from .embedding import cosine, embed_text, tokenize
from .gdr import (
    GdrDocument,
    GdrSummary,
    SCOPE_VALUES,
    compress_gdr,
    resolve_scope,
    stopwords,
)
from .index import CONTENT_TYPES, Candidate, DualIndex, recall

if TYPE_CHECKING:  # pragma: no cover
    from .attribution import GroundTruth

STAGES = ("pre", "intent", "routing", "recall", "ranking")
INTENTS = ("add", "replace", "find", "edit", "style")

TYPE_KEYWORDS: dict[str, str] = {
    "photo": "photo",
    "image": "photo",
    "picture": "photo",
    "icon": "icon",
    "background": "background",
    "pattern": "background",
    "video": "video",
    "clip": "video",
    "logo": "logo",
    "shape": "shape",
    "music": "audio",
    "sound": "audio",
}

COLOR_TABLE: dict[str, str] = {
    "black": "#000000",
    "silver": "#C0C0C0",
    "gray": "#808080",
    "white": "#FFFFFF",
    "maroon": "#800000",
    "red": "#FF0000",
    "purple": "#800080",
    "fuchsia": "#FF00FF",
    "green": "#008000",
    "lime": "#00FF00",
    "olive": "#808000",
    "yellow": "#FFFF00",
    "navy": "#000080",
    "blue": "#0000FF",
    "teal": "#008080",
    "aqua": "#00FFFF",
}
_MAX_COLOR_DIST = math.sqrt(3.0) * 255.0


class EmptyQuery(ValueError):
    """The raw query is empty or whitespace-only."""


class ModelUnavailable(RuntimeError):
    """The intent model endpoint could not be reached."""


class InvalidModelOutput(ValueError):
    """The intent model answered with an unparseable or invalid response."""


class NegativeRelevance(ValueError):
    """Relevance grades must be non-negative."""


@dataclass(frozen=True)
class QueryCase:
    case_id: str
    raw_query: str
    planner_prompt: str
    gdr_path: str
    truth: "GroundTruth"


@dataclass(frozen=True)
class ModelResponse:
    subprompt: str
    intent_class: str
    scope: str
    content_type_ranking: tuple[str, ...]
    scratchpad: str | None = None
    tokens_out: int = 0


@dataclass
class PipelineTrace:
    case_id: str
    policy: PolicyId
    bundle: PromptBundle | None
    stage1_bundle: PromptBundle | None
    response: ModelResponse | None
    routed_type: str | None
    ranked_types: tuple[str, ...]
    fallback_used: bool
    candidates: tuple[Candidate, ...]
    ranked_assets: tuple[tuple[str, float], ...]
    stage_timings: dict[str, float]
    total_ms: float
    error: str | None = None
    error_stage: str | None = None


# ---------------------------------------------------------------------------
# Stage operations
# ---------------------------------------------------------------------------


def preprocess(raw_query: str) -> str:
    """Trim, collapse whitespace, and lowercase; the original stays on the case."""
    if not raw_query or not raw_query.strip():
        raise EmptyQuery("query is empty")
    return " ".join(raw_query.split()).lower()


def route(
    response: ModelResponse,
    fallbacks: Mapping[str, tuple[str, ...]],
    depth: int = 2,
) -> tuple[str, tuple[str, ...]]:
    """Primary route plus fallback alternatives, model ranking first."""
    primary = response.content_type_ranking[0]
    merged: list[str] = []
    for ct in list(response.content_type_ranking) + list(fallbacks.get(primary, ())):
        if ct not in merged:
            merged.append(ct)
        if len(merged) == depth:
            break
    return primary, tuple(merged)


def _color_distance(a_hex: str, b_hex: str) -> float:
    ar, ag, ab = (int(a_hex[i : i + 2], 16) for i in (1, 3, 5))
    br, bg, bb = (int(b_hex[i : i + 2], 16) for i in (1, 3, 5))
    return math.sqrt((ar - br) ** 2 + (ag - bg) ** 2 + (ab - bb) ** 2)


def rerank(
    candidates: list[Candidate] | tuple[Candidate, ...],
    doc: GdrDocument,
    subprompt: str,
    assets: Mapping[str, "object"],
    *,
    weights: tuple[float, float, float] = (0.7, 0.15, 0.15),
    summary: GdrSummary | None = None,
) -> tuple[tuple[str, float], ...]:
    """Blend semantic similarity with palette contrast and slot-aspect fit."""
    if summary is None:
        summary = compress_gdr(doc)
    canvas_color = summary.palette_global[0].color if summary.palette_global else None
    scope = resolve_scope(doc)
    if scope.value == "selection":
        sel_id = scope.selected_element_ids[0]
        el = next(el for _, _, el in doc.elements() if el.id == sel_id)
        target_aspect = el.frame.aspect_ratio()
        aspect_fit = min(max(1.0 - abs(math.log(1.0 / target_aspect)), 0.0), 1.0)
    else:
        aspect_fit = 1.0
    qvec = embed_text(subprompt)
    w_sim, w_contrast, w_aspect = weights
    scored = []
    for cand in candidates:
        asset = assets[cand.asset_id]
        sim = cosine(qvec, embed_text(asset.caption))
        tag_hex = next((COLOR_TABLE[t] for t in asset.tags if t in COLOR_TABLE), None)
        if tag_hex is not None and canvas_color is not None:
            contrast = _color_distance(tag_hex, canvas_color) / _MAX_COLOR_DIST
        else:
            contrast = 0.5
        score = w_sim * sim + w_contrast * contrast + w_aspect * aspect_fit
        scored.append((cand.asset_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return tuple(scored)


def ndcg_at_k(relevances, k: int = 5) -> float:
    """Normalized DCG over the top ``k`` ranks; vacuous lists score 1.0."""
    rel = [float(r) for r in relevances]
    if any(r < 0.0 for r in rel):
        raise NegativeRelevance("relevance grades must be >= 0")
    if not rel:
        return 1.0
    limit = min(k, len(rel))
    dcg = sum(rel[i] / math.log2(i + 2) for i in range(limit))
    ideal = sorted(rel, reverse=True)
    idcg = sum(ideal[i] / math.log2(i + 2) for i in range(limit))
    if idcg == 0.0:
        return 1.0
    return dcg / idcg


# ---------------------------------------------------------------------------
# Intent model clients
# ---------------------------------------------------------------------------


class IntentClient(Protocol):
    def complete(
        self, case_id: str, query: str, bundle: PromptBundle, summary: GdrSummary
    ) -> ModelResponse: ...


@dataclass(frozen=True)
class ScriptTable:
    """Scripted responses keyed by (caseId, policy), used for fault injection."""

    entries: Mapping[tuple[str, str], dict] = field(default_factory=dict)

    @classmethod
    def from_json(cls, text: str) -> "ScriptTable":
        data = json.loads(text)
        entries: dict[tuple[str, str], dict] = {}
        for case_id, per_policy in data.items():
            for policy, response in per_policy.items():
                entries[(case_id, policy)] = response
        return cls(entries=entries)

    @classmethod
    def load(cls, path) -> "ScriptTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def get(self, case_id: str, policy: PolicyId) -> dict | None:
        return self.entries.get((case_id, policy.value))


def _response_tokens(subprompt: str, scratchpad: str | None) -> int:
    return estimate_tokens(subprompt + (scratchpad or ""))


def stub_complete(
    bundle: PromptBundle,
    script: ScriptTable,
    summary: GdrSummary,
    *,
    case_id: str,
    query: str,
    fallbacks: Mapping[str, tuple[str, ...]] = DEFAULT_FALLBACKS,
) -> ModelResponse:
    """Deterministic intent-model stand-in.

    A scripted entry for (case, policy) is returned verbatim; otherwise a
    keyword heuristic derives intent, subprompt, and content-type ranking
    from the normalized query and the canvas summary.
    """
    entry = script.get(case_id, bundle.policy)
    if entry is not None:
        subprompt = entry.get("subprompt", "")
        scratchpad = entry.get("scratchpad")
        return ModelResponse(
            subprompt=subprompt,
            intent_class=entry.get("intentClass", "find"),
            scope=entry.get("scope", "global"),
            content_type_ranking=tuple(entry.get("contentTypeRanking", ())),
            scratchpad=scratchpad,
            tokens_out=_response_tokens(subprompt, scratchpad),
        )

    tokens = tokenize(query)
    intent = next((t for t in tokens if t in INTENTS), "find")
    primary = next((TYPE_KEYWORDS[t] for t in tokens if t in TYPE_KEYWORDS), "photo")
    stops = stopwords()
    noun_tokens = [
        t
        for t in tokens
        if t not in INTENTS and t not in TYPE_KEYWORDS and t not in stops
    ]
    if not noun_tokens:
        noun_tokens = [t for t in tokens if t not in INTENTS] or tokens
    phrase = " ".join(noun_tokens)
    cue = summary.domain_cues[0] if summary.domain_cues else None
    if cue is not None and cue not in tokens:
        phrase = f"{cue} {phrase}"
    scope = (
        "selection" if any(es.selected for es in summary.per_element) else "global"
    )
    second = next(iter(fallbacks.get(primary, ())), None)
    ranking = (primary,) if second is None else (primary, second)
    scratchpad = None
    if bundle.scratchpad_requested:
        scratchpad = (
            f"reasoning: request implies intent={intent};"
            f" canvas cue={cue or '-'}; best content type={primary}"
        )
    return ModelResponse(
        subprompt=phrase,
        intent_class=intent,
        scope=scope,
        content_type_ranking=ranking,
        scratchpad=scratchpad,
        tokens_out=_response_tokens(phrase, scratchpad),
    )


@dataclass(frozen=True)
class StubClient:
    script: ScriptTable = field(default_factory=ScriptTable)
    fallbacks: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_FALLBACKS)
    )

    def complete(
        self, case_id: str, query: str, bundle: PromptBundle, summary: GdrSummary
    ) -> ModelResponse:
        return stub_complete(
            bundle,
            self.script,
            summary,
            case_id=case_id,
            query=query,
            fallbacks=self.fallbacks,
        )


class RemoteIntentClient:
    """HTTP client for a live intent model (disabled unless configured).

    Sends the bundle parts plus the expected output schema as JSON and
    retries once before reporting the model unavailable.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 1):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries

    def complete(
        self, case_id: str, query: str, bundle: PromptBundle, summary: GdrSummary
    ) -> ModelResponse:
        payload = json.dumps(
            {
                "caseId": case_id,
                "policy": bundle.policy.value,
                "query": query,
                "systemPrompt": bundle.system_prompt,
                "shots": [s.render() for s in bundle.shots],
                "plannerPrompt": bundle.planner_prompt,
                "contextText": bundle.context_text,
                "scratchpadRequested": bundle.scratchpad_requested,
                "expectedSchema": {
                    "subprompt": "string",
                    "intentClass": list(INTENTS),
                    "scope": list(SCOPE_VALUES),
                    "contentTypeRanking": list(CONTENT_TYPES),
                    "scratchpad": "string or null",
                    "tokensOut": "integer",
                },
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    body = resp.read().decode("utf-8")
                break
            except (urllib.error.URLError, OSError) as exc:
                last_error = exc
        else:
            raise ModelUnavailable(f"intent model unreachable: {last_error}")
        try:
            data = json.loads(body)
            subprompt = data["subprompt"]
            scratchpad = data.get("scratchpad")
            return ModelResponse(
                subprompt=subprompt,
                intent_class=data["intentClass"],
                scope=data.get("scope", "global"),
                content_type_ranking=tuple(data["contentTypeRanking"]),
                scratchpad=scratchpad,
                tokens_out=int(data.get("tokensOut", _response_tokens(subprompt, scratchpad))),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidModelOutput(f"bad intent model reply: {exc}") from exc


def infer_intent(
    client: IntentClient,
    bundle: PromptBundle,
    *,
    case_id: str,
    query: str,
    summary: GdrSummary,
) -> ModelResponse:
    """Call the intent model, validate its response, and record output tokens."""
    response = client.complete(case_id, query, bundle, summary)
    if not response.subprompt or not response.subprompt.strip():
        raise InvalidModelOutput("empty subprompt")
    if response.intent_class not in INTENTS:
        raise InvalidModelOutput(f"unknown intent {response.intent_class!r}")
    if response.scope not in SCOPE_VALUES:
        raise InvalidModelOutput(f"unknown scope {response.scope!r}")
    ranking = response.content_type_ranking
    if not ranking:
        raise InvalidModelOutput("empty content type ranking")
    if len(set(ranking)) != len(ranking):
        raise InvalidModelOutput("duplicate entries in content type ranking")
    for ct in ranking:
        if ct not in CONTENT_TYPES:
            raise InvalidModelOutput(f"unknown content type {ct!r}")
    bundle.tokens_out_observed = response.tokens_out
    return response


# ---------------------------------------------------------------------------
# Case orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineDeps:
    index: DualIndex
    bank: ShotBank
    client: IntentClient
    config: PipelineConfig = PipelineConfig()
    docs: Mapping[str, GdrDocument] = field(default_factory=dict)
    prompts: Mapping[PolicyId, str] | None = None


def _stage1_bundle(prompts: Mapping[PolicyId, str], planner_prompt: str) -> PromptBundle:
    system_prompt = prompts[PolicyId.TWO_STAGE]
    return PromptBundle(
        policy=PolicyId.TWO_STAGE,
        system_prompt=system_prompt,
        shots=(),
        planner_prompt=planner_prompt,
        context_text="",
        scratchpad_requested=False,
        tokens_in=bundle_tokens_in(system_prompt, (), planner_prompt, ""),
    )


def run_case(case: QueryCase, policy: PolicyId, deps: PipelineDeps) -> PipelineTrace:
    """Execute the five stages for one (case, policy) pair.

    Stage exceptions are captured on the trace (error + blamed stage) so a
    batch run always yields one trace per pair; un-run stages keep a 0.0
    timing. Documents must be preloaded into ``deps.docs``.
    """
    prompts = deps.prompts if deps.prompts is not None else load_system_prompts()
    doc = deps.docs[case.gdr_path]
    summary = compress_gdr(doc)
    timings = dict.fromkeys(STAGES, 0.0)
    error: str | None = None
    error_stage: str | None = None
    bundle: PromptBundle | None = None
    stage1: PromptBundle | None = None
    response: ModelResponse | None = None
    routed_type: str | None = None
    ranked_types: tuple[str, ...] = ()
    fallback_used = False
    candidates: list[Candidate] = []
    ranked_assets: tuple[tuple[str, float], ...] = ()
    query = ""

    t_total = time.perf_counter()

    t0 = time.perf_counter()
    try:
        query = preprocess(case.raw_query)
    except Exception as exc:
        error, error_stage = str(exc), "pre"
    timings["pre"] = (time.perf_counter() - t0) * 1000.0

    if error is None:
        t0 = time.perf_counter()
        try:
            precomputed = None
            if policy is PolicyId.TWO_STAGE:
                stage1 = _stage1_bundle(prompts, case.planner_prompt)
                first_pass = infer_intent(
                    deps.client, stage1, case_id=case.case_id, query=query, summary=summary
                )
                precomputed = first_pass.content_type_ranking[0]
            bundle = build_bundle(
                policy,
                case.planner_prompt,
                doc,
                deps.bank,
                precomputed_type=precomputed,
                prompts=prompts,
            )
            response = infer_intent(
                deps.client, bundle, case_id=case.case_id, query=query, summary=summary
            )
        except Exception as exc:
            error, error_stage = str(exc), "intent"
        timings["intent"] = (time.perf_counter() - t0) * 1000.0

    if error is None:
        t0 = time.perf_counter()
        try:
            routed_type, ranked_types = route(
                response, deps.config.fallbacks, deps.config.fallback_depth
            )
        except Exception as exc:
            error, error_stage = str(exc), "routing"
        timings["routing"] = (time.perf_counter() - t0) * 1000.0

    if error is None:
        t0 = time.perf_counter()
        try:
            candidates = recall(
                deps.index,
                response.subprompt,
                ranked_types[0],
                deps.config.k_recall,
                alpha=deps.config.alpha_fusion,
                recall_floor=deps.config.recall_floor,
            )
            if not candidates and len(ranked_types) > 1:
                fallback_used = True
                candidates = recall(
                    deps.index,
                    response.subprompt,
                    ranked_types[1],
                    deps.config.k_recall,
                    alpha=deps.config.alpha_fusion,
                    recall_floor=deps.config.recall_floor,
                )
        except Exception as exc:
            error, error_stage = str(exc), "recall"
        timings["recall"] = (time.perf_counter() - t0) * 1000.0

    if error is None:
        t0 = time.perf_counter()
        try:
            if candidates:
                ranked_assets = rerank(
                    candidates,
                    doc,
                    response.subprompt,
                    deps.index.assets,
                    weights=deps.config.rerank_weights,
                    summary=summary,
                )
        except Exception as exc:
            error, error_stage = str(exc), "ranking"
        timings["ranking"] = (time.perf_counter() - t0) * 1000.0

    total_ms = (time.perf_counter() - t_total) * 1000.0
    return PipelineTrace(
        case_id=case.case_id,
        policy=policy,
        bundle=bundle,
        stage1_bundle=stage1,
        response=response,
        routed_type=routed_type,
        ranked_types=ranked_types,
        fallback_used=fallback_used,
        candidates=tuple(candidates),
        ranked_assets=ranked_assets,
        stage_timings=timings,
        total_ms=total_ms,
        error=error,
        error_stage=error_stage,
    )
