"""Deterministic feature-hashed text embeddings.

These vectors stand in for a production embedding service so that
similarity-based checks (intent match, recall admission, ranking
relevance) are reproducible bit-for-bit across runs and machines.
Features are word unigrams, word bigrams, and character trigrams,
hashed into a fixed number of signed buckets with a keyed hash.
"""

from __future__ import annotations

import json
import re
import socket
from functools import lru_cache
from hashlib import blake2b

import numpy as np

DIM = 256

_HASH_KEY = b"designsearch-v1"
_TOKEN_RE = re.compile(r"[0-9a-z]+")

# Type alias: unit-norm float64 vector of length DIM (all-zeros for empty text).
EmbeddingVector = np.ndarray


class DimensionMismatch(ValueError):
    """Two vectors of different lengths were compared."""


class RemoteEmbedderError(RuntimeError):
    """The remote embedding service failed or answered with a bad payload."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _features(tokens: list[str]) -> list[str]:
    feats = ["w:" + t for t in tokens]
    feats += ["b:" + a + " " + b for a, b in zip(tokens, tokens[1:])]
    for t in tokens:
        feats += ["c:" + t[i : i + 3] for i in range(len(t) - 2)]
    return feats


@lru_cache(maxsize=131072)
def _embed_cached(text: str) -> np.ndarray:
    feats = _features(tokenize(text))
    vec = np.zeros(DIM, dtype=np.float64)
    if not feats:
        vec.flags.writeable = False
        return vec
    salt = 0
    while True:
        salt_bytes = salt.to_bytes(8, "big")
        for feat in feats:
            digest = blake2b(
                feat.encode("utf-8"), digest_size=8, key=_HASH_KEY, salt=salt_bytes
            ).digest()
            bucket = int.from_bytes(digest[:4], "big") % DIM
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
            vec.flags.writeable = False
            return vec
        # Signed collisions can cancel exactly; re-hash with a new salt so the
        # zero vector stays reserved for empty input.
        salt += 1


def embed_text(text: str) -> EmbeddingVector:
    """Embed text deterministically; returns a shared read-only array."""
    return _embed_cached(text)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; zero vectors compare as 0.0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


class RemoteEmbedder:
    """Client for an external embedding service (disabled by default).

    Protocol: one JSON line ``{"text": ...}`` per request over a TCP
    connection, answered by one JSON line ``{"values": [... DIM reals ...]}``.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 5.0):
        self.host = host
        self.port = port
        self.timeout = timeout

    def embed_text(self, text: str) -> EmbeddingVector:
        payload = json.dumps({"text": text}) + "\n"
        try:
            with socket.create_connection((self.host, self.port), self.timeout) as conn:
                conn.sendall(payload.encode("utf-8"))
                conn.shutdown(socket.SHUT_WR)
                raw = b""
                while not raw.endswith(b"\n"):
                    chunk = conn.recv(65536)
                    if not chunk:
                        break
                    raw += chunk
        except OSError as exc:
            raise RemoteEmbedderError(f"embedding service unreachable: {exc}") from exc
        try:
            reply = json.loads(raw.decode("utf-8"))
            values = reply["values"]
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteEmbedderError(f"bad embedder reply: {exc}") from exc
        if not isinstance(values, list) or len(values) != DIM:
            raise RemoteEmbedderError(f"expected {DIM} values, got {values!r:.80}")
        vec = np.asarray(values, dtype=np.float64)
        if not np.isfinite(vec).all():
            raise RemoteEmbedderError("non-finite values in embedder reply")
        return vec
