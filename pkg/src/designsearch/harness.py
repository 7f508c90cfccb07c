"""Batch evaluation runner: config loading, execution, artifacts, reports.

A run executes every configured policy over every case, attributes each
trace, and writes four artifacts into the run directory: traces.jsonl,
verdicts.jsonl, report.json (structured), and report.csv (tabular).
With the stub client everything except wall-clock timing fields is
byte-identical across runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .attribution import (
    AttributionVerdict,
    EmptyInput,
    EvaluationReport,
    GroundTruth,
    aggregate,
    attribute,
    report_to_dict,
    verdict_to_record,
)
from .budget import PolicyId, PromptBundle, load_shot_bank_file
from .config import DEFAULT_FALLBACKS, PipelineConfig, validate_fallbacks
from .gdr import parse_gdr
from .index import CONTENT_TYPES, load_corpus
from .pipeline import (
    PipelineDeps,
    PipelineTrace,
    QueryCase,
    RemoteIntentClient,
    ScriptTable,
    StubClient,
    run_case,
)

TABULAR_COLUMNS = (
    "policy",
    "intentMatch",
    "routingSuccess",
    "routingWithFallback",
    "fallbackGain",
    "recallSuccess",
    "meanNdcg5",
    "overall",
    "p50",
    "p95",
    "p99",
    "relCost",
)

TIMING_FIELDS = ("stageTimings", "totalMs")


class ConfigError(ValueError):
    """A run configuration or input file is unusable."""


class IoFailure(OSError):
    """Writing a report artifact failed."""


@dataclass(frozen=True)
class LatencySample:
    policy: PolicyId
    case_id: str
    total_ms: float


@dataclass(frozen=True)
class RunConfig:
    policies: tuple[PolicyId, ...]
    corpus_path: Path
    case_file_path: Path
    shot_bank_path: Path
    gdr_dir: Path
    script_path: Path | None = None
    seed: int = 0
    tau_intent: float = 0.7
    theta_recall: float = 0.15
    alpha_fusion: float = 0.5
    rerank_weights: tuple[float, float, float] = (0.7, 0.15, 0.15)
    fallback_map: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_FALLBACKS)
    )
    k: int = 20
    f: int = 2
    client_mode: str = "stub"
    remote_endpoint: str | None = None
    parallelism: int = 4


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: sorted sample at index ceil(q/100 * n) - 1."""
    if len(samples) == 0:
        raise EmptyInput("percentile of an empty sample set")
    if not 0.0 < q <= 100.0:
        raise ValueError(f"q must be in (0, 100], got {q}")
    ordered = sorted(samples)
    n = len(ordered)
    if float(q).is_integer():
        rank = -((-int(q) * n) // 100)  # exact integer ceil division
    else:
        rank = math.ceil(q * n / 100.0)
    return ordered[max(rank - 1, 0)]


# ---------------------------------------------------------------------------
# Input loading
# ---------------------------------------------------------------------------


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    base = path.parent

    try:
        policy_names = data["policies"]
        corpus = _resolve(base, data["corpusPath"])
        case_file = _resolve(base, data["caseFilePath"])
        shot_bank = _resolve(base, data["shotBankPath"])
        gdr_dir = _resolve(base, data["gdrDir"])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc.args[0]!r}") from exc
    if not policy_names:
        raise ConfigError(f"{path}: policies must be non-empty")
    try:
        policies = tuple(PolicyId(name) for name in policy_names)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    script_raw = data.get("scriptPath")
    script = _resolve(base, script_raw) if script_raw else None
    for ref in (corpus, case_file, shot_bank, gdr_dir, *( [script] if script else [] )):
        if not ref.exists():
            raise ConfigError(f"{path}: referenced path does not exist: {ref}")

    fallback_map = {
        str(k): tuple(v) for k, v in data.get("fallbackMap", DEFAULT_FALLBACKS).items()
    }
    for src, targets in fallback_map.items():
        for ct in (src, *targets):
            if ct not in CONTENT_TYPES:
                raise ConfigError(f"{path}: unknown content type in fallbackMap: {ct!r}")
    validate_fallbacks(fallback_map)

    client_mode = data.get("clientMode", "stub")
    if client_mode not in ("stub", "remote"):
        raise ConfigError(f"{path}: clientMode must be 'stub' or 'remote'")
    if client_mode == "remote" and not data.get("remoteEndpoint"):
        raise ConfigError(f"{path}: clientMode 'remote' needs remoteEndpoint")

    weights = tuple(float(w) for w in data.get("rerankWeights", (0.7, 0.15, 0.15)))
    if len(weights) != 3:
        raise ConfigError(f"{path}: rerankWeights must have 3 entries")

    parallelism = int(data.get("parallelism", 4))
    k = int(data.get("K", 20))
    f = int(data.get("F", 2))
    if parallelism < 1 or k < 1 or f < 1:
        raise ConfigError(f"{path}: parallelism, K, and F must be >= 1")

    return RunConfig(
        policies=policies,
        corpus_path=corpus,
        case_file_path=case_file,
        shot_bank_path=shot_bank,
        gdr_dir=gdr_dir,
        script_path=script,
        seed=int(data.get("seed", 0)),
        tau_intent=float(data.get("tauIntent", 0.7)),
        theta_recall=float(data.get("thetaRecall", 0.15)),
        alpha_fusion=float(data.get("alphaFusion", 0.5)),
        rerank_weights=weights,
        fallback_map=fallback_map,
        k=k,
        f=f,
        client_mode=client_mode,
        remote_endpoint=data.get("remoteEndpoint"),
        parallelism=parallelism,
    )


def load_cases(path: str | Path) -> list[QueryCase]:
    path = Path(path)
    cases: list[QueryCase] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                case_id = obj["caseId"]
                raw_query = obj["rawQuery"]
                planner_prompt = obj["plannerPrompt"]
                gdr_path = obj["gdrPath"]
                truth = GroundTruth(
                    expected_subprompt=obj["expectedSubprompt"],
                    expected_content_type=obj["expectedContentType"],
                    expect_assets=bool(obj.get("expectAssets", True)),
                    expected_best_asset_id=obj.get("expectedBestAssetId"),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{line_no}: bad case record: {exc}") from exc
            if not isinstance(case_id, str) or not case_id:
                raise ConfigError(f"{path}:{line_no}: caseId must be a non-empty string")
            if case_id in seen:
                raise ConfigError(f"{path}:{line_no}: duplicate caseId {case_id!r}")
            if not isinstance(raw_query, str) or not raw_query.strip():
                raise ConfigError(f"{path}:{line_no}: rawQuery must be non-empty")
            seen.add(case_id)
            cases.append(
                QueryCase(
                    case_id=case_id,
                    raw_query=raw_query,
                    planner_prompt=planner_prompt,
                    gdr_path=gdr_path,
                    truth=truth,
                )
            )
    return cases


def load_documents(cases: Iterable[QueryCase], gdr_dir: str | Path) -> dict:
    gdr_dir = Path(gdr_dir)
    docs = {}
    for case in cases:
        if case.gdr_path in docs:
            continue
        full = _resolve(gdr_dir, case.gdr_path)
        if not full.exists():
            raise ConfigError(f"case {case.case_id}: missing GDR file: {full}")
        docs[case.gdr_path] = parse_gdr(full.read_text("utf-8"))
    return docs


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _bundle_record(bundle: PromptBundle | None) -> dict | None:
    if bundle is None:
        return None
    digest = hashlib.sha256(bundle.render().encode("utf-8")).hexdigest()
    return {
        "tokensIn": bundle.tokens_in,
        "tokensOut": bundle.tokens_out_observed,
        "shotCount": len(bundle.shots),
        "scratchpadRequested": bundle.scratchpad_requested,
        "sha256": digest,
    }


def trace_to_record(trace: PipelineTrace) -> dict:
    response = None
    if trace.response is not None:
        response = {
            "subprompt": trace.response.subprompt,
            "intentClass": trace.response.intent_class,
            "scope": trace.response.scope,
            "contentTypeRanking": list(trace.response.content_type_ranking),
            "scratchpad": trace.response.scratchpad,
            "tokensOut": trace.response.tokens_out,
        }
    return {
        "caseId": trace.case_id,
        "policy": trace.policy.value,
        "error": trace.error,
        "errorStage": trace.error_stage,
        "bundle": _bundle_record(trace.bundle),
        "stage1Bundle": _bundle_record(trace.stage1_bundle),
        "response": response,
        "routedType": trace.routed_type,
        "rankedTypes": list(trace.ranked_types),
        "fallbackUsed": trace.fallback_used,
        "candidates": [
            {
                "assetId": c.asset_id,
                "fusedScore": c.fused_score,
                "lexScore": c.lex_score,
                "vecScore": c.vec_score,
            }
            for c in trace.candidates
        ],
        "rankedAssets": [[asset_id, score] for asset_id, score in trace.ranked_assets],
        "stageTimings": dict(trace.stage_timings),
        "totalMs": trace.total_ms,
    }


def strip_timing_fields(record: dict) -> dict:
    """Copy of a trace record without wall-clock fields (for comparisons)."""
    return {k: v for k, v in record.items() if k not in TIMING_FIELDS}


def _make_client(config: RunConfig, script: ScriptTable):
    if config.client_mode == "remote":
        return RemoteIntentClient(config.remote_endpoint)
    return StubClient(script=script, fallbacks=config.fallback_map)


def run_evaluation(
    config: RunConfig, out_dir: str | Path | None = None
) -> tuple[EvaluationReport, list[PipelineTrace], list[AttributionVerdict]]:
    """Run every policy over every case and aggregate one report."""
    index = load_corpus(config.corpus_path)
    bank = load_shot_bank_file(config.shot_bank_path)
    cases = load_cases(config.case_file_path)
    if not cases:
        raise ConfigError(f"{config.case_file_path}: no cases")
    docs = load_documents(cases, config.gdr_dir)
    script = ScriptTable.load(config.script_path) if config.script_path else ScriptTable()
    pipeline_config = PipelineConfig(
        tau_intent=config.tau_intent,
        recall_floor=config.theta_recall,
        alpha_fusion=config.alpha_fusion,
        rerank_weights=config.rerank_weights,
        k_recall=config.k,
        fallback_depth=config.f,
        fallbacks=config.fallback_map,
    )
    deps = PipelineDeps(
        index=index,
        bank=bank,
        client=_make_client(config, script),
        config=pipeline_config,
        docs=docs,
    )
    truths = {case.case_id: case.truth for case in cases}

    def job(pair: tuple[QueryCase, PolicyId]):
        case, policy = pair
        trace = run_case(case, policy, deps)
        verdict = attribute(
            trace, truths[case.case_id], assets=index.assets, tau=config.tau_intent
        )
        return trace, verdict

    pairs = [(case, policy) for policy in config.policies for case in cases]
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(job, pairs))
    else:
        results = [job(pair) for pair in pairs]

    order = {policy: i for i, policy in enumerate(config.policies)}
    results.sort(key=lambda tv: (order[tv[0].policy], tv[0].case_id))
    traces = [t for t, _ in results]
    verdicts = [v for _, v in results]
    report = aggregate(verdicts, traces, policy_order=config.policies)

    if out_dir is not None:
        write_run_artifacts(Path(out_dir), report, traces, verdicts)
    return report, traces, verdicts


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _cell(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def render_tabular(report: EvaluationReport) -> str:
    lines = [",".join(TABULAR_COLUMNS)]
    for row in report.policies:
        lines.append(
            ",".join(
                [
                    row.policy.value,
                    _cell(row.intent_match_rate),
                    _cell(row.routing_success_rate),
                    _cell(row.routing_with_fallback_rate),
                    _cell(row.fallback_gain),
                    _cell(row.recall_success_rate),
                    _cell(row.mean_ndcg5),
                    _cell(row.overall_success_rate),
                    _cell(row.latency_p50_ms),
                    _cell(row.latency_p95_ms),
                    _cell(row.latency_p99_ms),
                    _cell(row.rel_cost),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_structured(report: EvaluationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def emit_report(report: EvaluationReport, fmt: str, out_path: str | Path) -> Path:
    """Write the report in one format; returns the written path."""
    if fmt == "structured":
        text = render_structured(report)
    elif fmt == "tabular":
        text = render_tabular(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report {out_path}: {exc}") from exc
    return out_path


def write_run_artifacts(
    out_dir: Path,
    report: EvaluationReport,
    traces: Sequence[PipelineTrace],
    verdicts: Sequence[AttributionVerdict],
) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "traces.jsonl", "w", encoding="utf-8") as fh:
            for trace in traces:
                fh.write(json.dumps(trace_to_record(trace), ensure_ascii=False) + "\n")
        with open(out_dir / "verdicts.jsonl", "w", encoding="utf-8") as fh:
            for verdict in verdicts:
                fh.write(json.dumps(verdict_to_record(verdict), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write run artifacts under {out_dir}: {exc}") from exc
    emit_report(report, "structured", out_dir / "report.json")
    emit_report(report, "tabular", out_dir / "report.csv")
