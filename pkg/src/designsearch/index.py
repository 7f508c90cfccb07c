"""Asset corpus ingestion and hybrid lexical + vector recall.

The corpus is small enough to index in memory: a BM25-scored inverted
index on one side and per-asset caption+tag embeddings on the other,
partitioned by content type. Recall fuses both scores and an empty
result list is the zero-hit signal consumed downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .embedding import EmbeddingVector, cosine, embed_text, tokenize

CONTENT_TYPES = (
    "photo",
    "icon",
    "shape",
    "background",
    "video",
    "audio",
    "template",
    "logo",
)

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_ALPHA = 0.5
DEFAULT_RECALL_FLOOR = 0.15
DEFAULT_K = 20


class DuplicateAssetId(ValueError):
    def __init__(self, asset_id: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate asset id {asset_id!r}{where}")
        self.asset_id = asset_id
        self.line = line


class UnknownContentType(ValueError):
    def __init__(self, content_type: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown content type {content_type!r}{where}")
        self.content_type = content_type
        self.line = line


class MalformedRecord(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"malformed asset record{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class Asset:
    id: str
    content_type: str
    caption: str
    tags: tuple[str, ...] = ()
    licensed: bool = True


@dataclass(frozen=True)
class Candidate:
    asset_id: str
    fused_score: float
    lex_score: float
    vec_score: float


@dataclass(frozen=True)
class DualIndex:
    assets: Mapping[str, Asset]
    vectors: Mapping[str, EmbeddingVector]
    postings: Mapping[str, tuple[tuple[str, int], ...]]
    partitions: Mapping[str, tuple[str, ...]]
    doc_count: int
    doc_freq: Mapping[str, int]
    doc_lengths: Mapping[str, int]
    mean_doc_length: float


def asset_text(asset: Asset) -> str:
    return asset.caption + " " + " ".join(asset.tags) if asset.tags else asset.caption


def index_assets(assets: Iterable[Asset]) -> DualIndex:
    """Build both index sides from already-validated assets."""
    asset_map: dict[str, Asset] = {}
    vectors: dict[str, np.ndarray] = {}
    doc_lengths: dict[str, int] = {}
    postings_acc: dict[str, dict[str, int]] = {}
    partitions: dict[str, list[str]] = {ct: [] for ct in CONTENT_TYPES}
    for asset in assets:
        if asset.id in asset_map:
            raise DuplicateAssetId(asset.id)
        if asset.content_type not in CONTENT_TYPES:
            raise UnknownContentType(asset.content_type)
        asset_map[asset.id] = asset
        text = asset_text(asset)
        tokens = tokenize(text)
        doc_lengths[asset.id] = len(tokens)
        vectors[asset.id] = embed_text(text)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            postings_acc.setdefault(tok, {})[asset.id] = tf
        partitions[asset.content_type].append(asset.id)
    postings = {
        tok: tuple(sorted(entries.items())) for tok, entries in postings_acc.items()
    }
    doc_count = len(asset_map)
    mean_len = sum(doc_lengths.values()) / doc_count if doc_count else 0.0
    return DualIndex(
        assets=asset_map,
        vectors=vectors,
        postings=postings,
        partitions={ct: tuple(sorted(ids)) for ct, ids in partitions.items()},
        doc_count=doc_count,
        doc_freq={tok: len(entries) for tok, entries in postings.items()},
        doc_lengths=doc_lengths,
        mean_doc_length=mean_len,
    )


def parse_asset_record(line: str, line_no: int | None = None) -> Asset:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(str(exc), line_no) from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("expected a JSON object", line_no)
    try:
        asset_id = obj["id"]
        content_type = obj["contentType"]
        caption = obj["caption"]
    except KeyError as exc:
        raise MalformedRecord(f"missing field {exc.args[0]!r}", line_no) from exc
    tags = obj.get("tags", [])
    licensed = obj.get("licensed", True)
    if (
        not isinstance(asset_id, str)
        or not isinstance(content_type, str)
        or not isinstance(caption, str)
        or not isinstance(tags, list)
        or not all(isinstance(t, str) for t in tags)
        or not isinstance(licensed, bool)
    ):
        raise MalformedRecord("field has the wrong type", line_no)
    if content_type not in CONTENT_TYPES:
        raise UnknownContentType(content_type, line_no)
    return Asset(
        id=asset_id,
        content_type=content_type,
        caption=caption,
        tags=tuple(tags),
        licensed=licensed,
    )


def ingest_corpus(lines: Iterable[str]) -> DualIndex:
    """Ingest line-delimited asset records; blank lines are skipped."""
    assets: list[Asset] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        asset = parse_asset_record(line, line_no)
        if asset.id in seen:
            raise DuplicateAssetId(asset.id, line_no)
        seen[asset.id] = line_no
        assets.append(asset)
    return index_assets(assets)


def load_corpus(path) -> DualIndex:
    with open(path, encoding="utf-8") as fh:
        return ingest_corpus(fh)


def bm25_idf(doc_count: int, doc_freq: int) -> float:
    # The +1 form keeps idf strictly positive, so lexical scores stay >= 0.
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def bm25_term_weight(tf: int, doc_len: int, mean_doc_length: float) -> float:
    if tf == 0:
        return 0.0
    norm = BM25_K1 * (1.0 - BM25_B + BM25_B * doc_len / mean_doc_length)
    return tf * (BM25_K1 + 1.0) / (tf + norm)


def recall(
    index: DualIndex,
    subprompt: str,
    content_type: str,
    k: int = DEFAULT_K,
    *,
    alpha: float = DEFAULT_ALPHA,
    recall_floor: float = DEFAULT_RECALL_FLOOR,
) -> list[Candidate]:
    """Hybrid retrieval within one content-type partition.

    Assets are admitted by either a lexical match or a vector similarity
    at or above ``recall_floor``; an empty return is the zero-hit signal.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    part_ids = index.partitions.get(content_type, ())
    if not part_ids or index.doc_count == 0:
        return []
    part_set = set(part_ids)
    lex: dict[str, float] = {aid: 0.0 for aid in part_ids}
    for tok in sorted(set(tokenize(subprompt))):
        entries = index.postings.get(tok)
        if not entries:
            continue
        idf = bm25_idf(index.doc_count, index.doc_freq[tok])
        for aid, tf in entries:
            if aid in part_set:
                lex[aid] += idf * bm25_term_weight(
                    tf, index.doc_lengths[aid], index.mean_doc_length
                )
    qvec = embed_text(subprompt)
    vec = {aid: cosine(qvec, index.vectors[aid]) for aid in part_ids}
    max_lex = max(lex.values())
    out = []
    for aid in part_ids:
        if lex[aid] > 0.0 or vec[aid] >= recall_floor:
            lex_norm = lex[aid] / max_lex if max_lex > 0.0 else 0.0
            fused = alpha * max(vec[aid], 0.0) + (1.0 - alpha) * lex_norm
            out.append(
                Candidate(
                    asset_id=aid,
                    fused_score=fused,
                    lex_score=lex[aid],
                    vec_score=vec[aid],
                )
            )
    out.sort(key=lambda c: (-c.fused_score, c.asset_id))
    return out[:k]


def is_zero_hit(result: list[Candidate]) -> bool:
    return not result
