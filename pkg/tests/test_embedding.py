import json
import random
import socketserver
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from designsearch.embedding import (
    DIM,
    DimensionMismatch,
    RemoteEmbedder,
    RemoteEmbedderError,
    _embed_cached,
    cosine,
    embed_text,
    tokenize,
)

# Frozen regression constants for the reference hashing (first computed with
# this implementation, asserted bit-for-bit ever since).
SIM_COFFEE_BLACK = 0.42163702135578396
SIM_COFFEE_ROASTED = 0.7669649888473705


def test_empty_and_whitespace_yield_zero_vector():
    assert not embed_text("").any()
    assert not embed_text("   \t\n").any()
    assert not embed_text("...!!,,").any()


def test_normalization_identity():
    assert np.array_equal(embed_text("coffee beans"), embed_text("Coffee  Beans"))
    assert np.array_equal(embed_text("a-b"), embed_text("A b"))


def test_regression_similarity_constants():
    left = cosine(embed_text("coffee beans"), embed_text("black beans"))
    right = cosine(embed_text("coffee beans"), embed_text("coffee beans roasted"))
    assert left == pytest.approx(SIM_COFFEE_BLACK, abs=1e-12)
    assert right == pytest.approx(SIM_COFFEE_ROASTED, abs=1e-12)
    assert left < right


def test_cosine_identities():
    v = embed_text("coffee beans")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-9)
    assert cosine(np.zeros(DIM), v) == 0.0
    assert cosine(np.zeros(DIM), np.zeros(DIM)) == 0.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine(np.zeros(DIM), np.zeros(DIM + 1))


def test_self_similarity_on_random_strings():
    rng = random.Random(0)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 "
    for _ in range(1000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40)))
        v = embed_text(text)
        if tokenize(text):
            assert abs(cosine(v, v) - 1.0) < 1e-9
            assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-9
        else:
            assert not v.any()


def test_determinism_across_cache_clears():
    before = embed_text("stone pattern backgrounds").tobytes()
    _embed_cached.cache_clear()
    after = embed_text("stone pattern backgrounds").tobytes()
    assert before == after


@given(st.text(max_size=60))
def test_unit_norm_or_zero(text):
    v = embed_text(text)
    assert v.shape == (DIM,)
    if tokenize(text):
        assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-9
    else:
        assert not v.any()


@given(st.text(max_size=40), st.text(max_size=40))
def test_cosine_symmetry_exact(a, b):
    va, vb = embed_text(a), embed_text(b)
    assert cosine(va, vb) == cosine(vb, va)


@given(st.text(max_size=40), st.text(max_size=40))
def test_cosine_range(a, b):
    value = cosine(embed_text(a), embed_text(b))
    assert -1.0 <= value <= 1.0


# ---------------------------------------------------------------------------
# Remote embedder wire protocol
# ---------------------------------------------------------------------------


class _EmbedHandler(socketserver.StreamRequestHandler):
    def handle(self):
        request = json.loads(self.rfile.readline().decode("utf-8"))
        reply = self.server.reply_fn(request["text"])  # type: ignore[attr-defined]
        self.wfile.write((json.dumps(reply) + "\n").encode("utf-8"))


class _EmbedServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True


@pytest.fixture()
def embed_server():
    def start(reply_fn):
        server = _EmbedServer(("127.0.0.1", 0), _EmbedHandler)
        server.reply_fn = reply_fn
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return server.server_address[1]

    servers: list[_EmbedServer] = []
    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


def test_remote_embedder_round_trip(embed_server):
    port = embed_server(lambda text: {"values": embed_text(text).tolist()})
    client = RemoteEmbedder(port=port)
    got = client.embed_text("coffee beans")
    assert np.allclose(got, embed_text("coffee beans"))


def test_remote_embedder_bad_payload(embed_server):
    port = embed_server(lambda text: {"values": [1.0, 2.0]})
    with pytest.raises(RemoteEmbedderError):
        RemoteEmbedder(port=port).embed_text("x")


def test_remote_embedder_unreachable():
    with pytest.raises(RemoteEmbedderError):
        RemoteEmbedder(port=9, timeout=0.2).embed_text("x")
