"""Prompt assembly policies and token accounting.

Each policy trades context volume against cost: from the full system
prompt with every worked example down to a bare prompt with none.
Token counts use a fixed chars/4 estimate so cost comparisons are
reproducible without a tokenizer dependency.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from .embedding import EmbeddingVector, cosine, embed_text
from .gdr import GdrDocument, compress_gdr, serialize_context
from .index import CONTENT_TYPES

RETRIEVED_SHOT_COUNT = 3
COMPRESSED_PROMPT_SENTENCES = 2

_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


class PolicyId(str, Enum):
    BASELINE = "Baseline"
    CHAIN_OF_THOUGHT = "ChainOfThought"
    CONTEXT_COMPRESSION = "ContextCompression"
    MINI_SHOT = "MiniShot"
    RETRIEVAL_AUGMENTED = "RetrievalAugmented"
    TWO_STAGE = "TwoStage"
    ZERO_SHOT = "ZeroShot"


_PROMPT_FILES = {
    PolicyId.BASELINE: "baseline.txt",
    PolicyId.CHAIN_OF_THOUGHT: "chain_of_thought.txt",
    PolicyId.CONTEXT_COMPRESSION: "context_compression.txt",
    PolicyId.MINI_SHOT: "mini_shot.txt",
    PolicyId.RETRIEVAL_AUGMENTED: "retrieval_augmented.txt",
    PolicyId.TWO_STAGE: "two_stage.txt",
    PolicyId.ZERO_SHOT: "zero_shot.txt",
}


class MissingPrecomputedType(ValueError):
    """A stage-2 bundle was requested without the stage-1 type prediction."""


class MissingNormalizer(ValueError):
    """Relative cost needs a ChainOfThought bundle with nonzero tokens."""


class MalformedShot(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"malformed shot record{where}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Shot:
    content_type: str
    example_query: str
    example_subprompt: str
    embedding: EmbeddingVector

    def render(self) -> str:
        return (
            f"example[{self.content_type}] query: {self.example_query}"
            f" -> subprompt: {self.example_subprompt}"
        )


@dataclass(frozen=True)
class ShotBank:
    shots: tuple[Shot, ...]

    def by_type(self, content_type: str) -> tuple[Shot, ...]:
        return tuple(s for s in self.shots if s.content_type == content_type)

    def first_per_type(self) -> tuple[Shot, ...]:
        seen: set[str] = set()
        out = []
        for shot in self.shots:
            if shot.content_type not in seen:
                seen.add(shot.content_type)
                out.append(shot)
        return tuple(out)


def make_shot(content_type: str, example_query: str, example_subprompt: str) -> Shot:
    return Shot(
        content_type=content_type,
        example_query=example_query,
        example_subprompt=example_subprompt,
        embedding=embed_text(example_query),
    )


def load_shot_bank(lines: Iterable[str]) -> ShotBank:
    shots = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            ct = obj["contentType"]
            query = obj["exampleQuery"]
            sub = obj["exampleSubprompt"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedShot(str(exc), line_no) from exc
        if ct not in CONTENT_TYPES:
            raise MalformedShot(f"unknown content type {ct!r}", line_no)
        shots.append(make_shot(ct, query, sub))
    return ShotBank(shots=tuple(shots))


def load_shot_bank_file(path) -> ShotBank:
    with open(path, encoding="utf-8") as fh:
        return load_shot_bank(fh)


@dataclass
class PromptBundle:
    policy: PolicyId
    system_prompt: str
    shots: tuple[Shot, ...]
    planner_prompt: str
    context_text: str
    scratchpad_requested: bool
    tokens_in: int
    tokens_out_observed: int = 0

    def render(self) -> str:
        parts = [self.system_prompt]
        parts += [s.render() for s in self.shots]
        parts += [self.planner_prompt, self.context_text]
        return "\n\n".join(parts)


def estimate_tokens(text: str) -> int:
    """ceil(len/4): a fixed, deterministic proxy for tokenizer counts."""
    return (len(text) + 3) // 4


def bundle_tokens_in(
    system_prompt: str, shots: Iterable[Shot], planner_prompt: str, context_text: str
) -> int:
    total = estimate_tokens(system_prompt)
    total += sum(estimate_tokens(s.render()) for s in shots)
    total += estimate_tokens(planner_prompt)
    total += estimate_tokens(context_text)
    return total


@lru_cache(maxsize=1)
def load_system_prompts() -> Mapping[PolicyId, str]:
    base = resources.files("designsearch").joinpath("data/prompts")
    return {
        policy: base.joinpath(name).read_text("utf-8")
        for policy, name in _PROMPT_FILES.items()
    }


def first_sentences(text: str, count: int) -> str:
    pieces = _SENTENCE_RE.split(text.strip())
    return " ".join(pieces[:count])


def build_bundle(
    policy: PolicyId,
    planner_prompt: str,
    doc: GdrDocument,
    bank: ShotBank,
    precomputed_type: str | None = None,
    prompts: Mapping[PolicyId, str] | None = None,
) -> PromptBundle:
    """Assemble one policy's prompt bundle from its ingredients."""
    prompts = prompts if prompts is not None else load_system_prompts()
    system_prompt = prompts[policy]
    context = serialize_context(doc)
    planner = planner_prompt
    scratchpad = False

    if policy in (PolicyId.BASELINE, PolicyId.CHAIN_OF_THOUGHT):
        shots = bank.shots
        scratchpad = policy is PolicyId.CHAIN_OF_THOUGHT
    elif policy is PolicyId.CONTEXT_COMPRESSION:
        shots = ()
        context = serialize_context(compress_gdr(doc))
        planner = first_sentences(planner_prompt, COMPRESSED_PROMPT_SENTENCES)
    elif policy is PolicyId.MINI_SHOT:
        shots = bank.first_per_type()
    elif policy is PolicyId.RETRIEVAL_AUGMENTED:
        qvec = embed_text(planner_prompt)
        ranked = sorted(
            enumerate(bank.shots),
            key=lambda pair: (-cosine(qvec, pair[1].embedding), pair[0]),
        )
        shots = tuple(shot for _, shot in ranked[:RETRIEVED_SHOT_COUNT])
    elif policy is PolicyId.TWO_STAGE:
        if precomputed_type is None:
            raise MissingPrecomputedType("stage-2 bundle needs the predicted type")
        shots = () if precomputed_type == "shape" else bank.by_type(precomputed_type)
    elif policy is PolicyId.ZERO_SHOT:
        shots = ()
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unhandled policy {policy}")

    return PromptBundle(
        policy=policy,
        system_prompt=system_prompt,
        shots=shots,
        planner_prompt=planner,
        context_text=context,
        scratchpad_requested=scratchpad,
        tokens_in=bundle_tokens_in(system_prompt, shots, planner, context),
    )


def relative_cost_from_totals(totals: Mapping[PolicyId, float]) -> dict[PolicyId, float]:
    normalizer = totals.get(PolicyId.CHAIN_OF_THOUGHT)
    if normalizer is None or normalizer <= 0:
        raise MissingNormalizer("no ChainOfThought token total to normalize against")
    return {policy: total / normalizer for policy, total in totals.items()}


def relative_cost(bundles: Mapping[PolicyId, PromptBundle]) -> dict[PolicyId, float]:
    """Token cost of each policy relative to ChainOfThought (= 1.0)."""
    totals = {
        policy: float(b.tokens_in + b.tokens_out_observed) for policy, b in bundles.items()
    }
    return relative_cost_from_totals(totals)
