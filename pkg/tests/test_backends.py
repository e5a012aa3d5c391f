import json

import httpx
import numpy as np
import pytest

from hopfuse.backends import (
    MockEvidenceBackend,
    MockHashEncoder,
    MockRRBackend,
    MockRerankBackend,
    PlantedChainEncoder,
    RemoteEncoderBackend,
    RemoteEvidenceBackend,
    RemoteRerankBackend,
    RemoteRRBackend,
    RemoteSession,
    serialize_query_chain,
)
from hopfuse.corpus import Paragraph, default_sentence_spans
from hopfuse.errors import RemoteProtocolError, RemoteTransportError

from helpers import paragraph_record


def make_paragraph(doc_id="doc", title="Title", text=None) -> Paragraph:
    rec = paragraph_record(doc_id, title, text)
    return Paragraph(rec["doc_id"], rec["title"], rec["text"],
                     tuple(default_sentence_spans(rec["text"])))


def cos(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestQueryChainSerialization:
    def test_question_alone(self):
        assert serialize_query_chain("What is it?", []) == "What is it?"

    def test_chain_format(self):
        para = make_paragraph("d1", "Some Title")
        out = serialize_query_chain("Q?", [para])
        assert out.startswith("Q? [QSEP] Some Title | ")
        assert para.sentence(0) in out

    def test_two_paragraph_chain(self):
        a, b = make_paragraph("a", "A"), make_paragraph("b", "B")
        out = serialize_query_chain("Q?", [a, b])
        assert out.index("[QSEP] A |") < out.index("[QSEP] B |")


class TestMockHashEncoder:
    def test_deterministic(self):
        enc = MockHashEncoder(dim=64, seed=3)
        a = enc.embed_text("the quick brown fox")
        b = enc.embed_text("the quick brown fox")
        assert np.array_equal(a, b)

    def test_self_cosine_one(self):
        enc = MockHashEncoder(dim=64, seed=3)
        v = enc.embed_text("repeatable text body")
        assert cos(v, v) == pytest.approx(1.0)

    def test_disjoint_vocab_near_orthogonal(self):
        enc = MockHashEncoder(dim=256, seed=0)
        rng = np.random.default_rng(1)
        vocab_a = [f"alpha{i}" for i in range(400)]
        vocab_b = [f"omega{i}" for i in range(400)]
        for trial in range(20):
            ta = " ".join(rng.choice(vocab_a, size=12))
            tb = " ".join(rng.choice(vocab_b, size=12))
            assert abs(cos(enc.embed_text(ta), enc.embed_text(tb))) < 0.2

    def test_seed_changes_vectors(self):
        a = MockHashEncoder(dim=64, seed=0).embed_text("words here")
        b = MockHashEncoder(dim=64, seed=1).embed_text("words here")
        assert not np.array_equal(a, b)

    def test_encode_doc_and_query_shapes(self):
        enc = MockHashEncoder(dim=32, seed=0)
        para = make_paragraph()
        assert enc.encode_doc(para).shape == (32,)
        assert enc.encode_query("Q?", [para]).shape == (32,)

    def test_bad_dim_rejected(self):
        with pytest.raises(ValueError):
            MockHashEncoder(dim=0)


class TestMockScorers:
    def test_rerank_shape_and_range(self):
        para = make_paragraph()
        p, s = MockRerankBackend(seed=0).score("Q?", [], para)
        assert 0.0 <= p <= 1.0
        assert len(s) == para.sentence_count
        assert all(0.0 <= x <= 1.0 for x in s)

    def test_rerank_deterministic(self):
        para = make_paragraph()
        backend = MockRerankBackend(seed=5)
        assert backend.score("Q?", [], para) == backend.score("Q?", [], para)

    def test_evidence_shape(self):
        sentences = [("T1", "first sentence"), ("T2", "second sentence")]
        e, s_e = MockEvidenceBackend(seed=0).score("Q?", sentences)
        assert 0.0 <= e <= 1.0
        assert len(s_e) == 2

    def test_rr_deterministic(self):
        backend = MockRRBackend(seed=0)
        assert backend.score("Q?", "ctx") == backend.score("Q?", "ctx")


class TestPlantedChainEncoder:
    def test_forced_hops(self):
        chains = {"q?": ["b", "c"]}
        enc = PlantedChainEncoder.from_chains(chains, ["a", "b", "c"])
        para_b = make_paragraph("b", "b")
        hop0 = enc.encode_query("q?", [])
        assert hop0[enc.axes["b"]] == 1.0 and hop0.sum() == 1.0
        hop1 = enc.encode_query("q?", [para_b])
        assert hop1[enc.axes["c"]] == 1.0 and hop1.sum() == 1.0

    def test_unknown_prefix_zero_vector(self):
        enc = PlantedChainEncoder.from_chains({"q?": ["b"]}, ["a", "b"])
        assert enc.encode_query("other?", []).sum() == 0.0

    def test_doc_encoding_is_basis(self):
        enc = PlantedChainEncoder.from_chains({}, ["a", "b"])
        vec = enc.encode_doc(make_paragraph("b", "b"))
        assert vec[enc.axes["b"]] == 1.0 and vec.sum() == 1.0


def session_with_handler(handler, **kwargs) -> RemoteSession:
    transport = httpx.MockTransport(handler)
    client = httpx.Client(base_url="http://testserver", transport=transport)
    return RemoteSession(base_url="http://testserver", client=client,
                         retry_backoff=0.0, **kwargs)


class TestRemoteBackends:
    def test_embed_doc_shape(self):
        def handler(request):
            return httpx.Response(200, json={"vector": [0.1, 0.2, 0.3]})

        backend = RemoteEncoderBackend(session_with_handler(handler), dim=3)
        vec = backend.encode_doc(make_paragraph())
        assert vec.shape == (3,)

    def test_rerank_sentence_count_checked(self):
        para = make_paragraph()  # two sentences

        def good(request):
            return httpx.Response(200, json={"paragraph_score": 0.5,
                                             "sentence_scores": [0.1, 0.9]})

        p, s = RemoteRerankBackend(session_with_handler(good)).score("Q?", [], para)
        assert (p, s) == (0.5, [0.1, 0.9])

        def bad(request):
            return httpx.Response(200, json={"paragraph_score": 0.5,
                                             "sentence_scores": [0.1]})

        with pytest.raises(RemoteProtocolError):
            RemoteRerankBackend(session_with_handler(bad)).score("Q?", [], para)

    def test_dim_mismatch_is_hard_error(self):
        def handler(request):
            return httpx.Response(200, json={"vector": [1.0]})

        backend = RemoteEncoderBackend(session_with_handler(handler), dim=768)
        with pytest.raises(RemoteProtocolError):
            backend.embed_text("hello")

    def test_transport_failure_retried_then_hard(self):
        calls = {"n": 0}

        def flaky(request):
            calls["n"] += 1
            raise httpx.ConnectError("boom", request=request)

        backend = RemoteRRBackend(session_with_handler(flaky, max_retries=3))
        with pytest.raises(RemoteTransportError):
            backend.score("Q?", "ctx")
        assert calls["n"] == 3

    def test_transport_failure_recovers(self):
        calls = {"n": 0}

        def flaky_once(request):
            calls["n"] += 1
            if calls["n"] == 1:
                raise httpx.ConnectError("boom", request=request)
            return httpx.Response(200, json={"score": 0.25})

        backend = RemoteRRBackend(session_with_handler(flaky_once))
        assert backend.score("Q?", "ctx") == 0.25

    def test_jitter_clamped_but_violation_rejected(self):
        def jitter(request):
            return httpx.Response(200, json={"score": 1.0000005})

        assert RemoteRRBackend(session_with_handler(jitter)).score("Q?", "c") == 1.0

        def violation(request):
            return httpx.Response(200, json={"score": 1.01})

        with pytest.raises(RemoteProtocolError):
            RemoteRRBackend(session_with_handler(violation)).score("Q?", "c")

    def test_http_error_status_is_hard_error(self):
        def handler(request):
            return httpx.Response(500, json={"detail": "inference failed"})

        with pytest.raises(RemoteProtocolError):
            RemoteRRBackend(session_with_handler(handler)).score("Q?", "c")

    def test_evidence_score_lengths(self):
        def handler(request):
            payload = json.loads(request.content)
            n = len(payload["sentences"])
            return httpx.Response(200, json={"set_score": 0.5,
                                             "sentence_scores": [0.5] * n})

        backend = RemoteEvidenceBackend(session_with_handler(handler))
        e, s_e = backend.score("Q?", [("T", "text one"), ("T", "text two")])
        assert e == 0.5 and len(s_e) == 2

    def test_request_payload_shape(self):
        seen = {}

        def handler(request):
            seen.update(json.loads(request.content))
            return httpx.Response(200, json={"vector": [0.0, 0.0]})

        backend = RemoteEncoderBackend(session_with_handler(handler), dim=2)
        para = make_paragraph("d1", "Title")
        backend.encode_query("Q?", [para])
        assert seen["question"] == "Q?"
        assert seen["chain"][0]["title"] == "Title"
        assert len(seen["chain"][0]["sentences"]) == para.sentence_count
