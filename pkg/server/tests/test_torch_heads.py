"""Torch-kind checkpoints: a tiny randomly initialised transformer built
offline, saved in the declared checkpoint layout, served, and checked
for shapes, ranges, and determinism."""

import json

import pytest
from fastapi.testclient import TestClient

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from hopfuse_server.app import ServeConfig, create_app
from hopfuse_server.heads import load_encoder_head, load_evidence_head, load_rerank_head, load_rr_head

FIXTURE_WORDS = (
    "first second third sentence here topic about body text question why "
    "what when paragraph yes no retrieved context because reasons"
).split()

HIDDEN = 32
DECLARED_DIM = 16


def build_checkpoints(base) -> ServeConfig:
    from transformers import BertConfig, BertModel, BertTokenizer

    backbone = base / "backbone"
    backbone.mkdir(parents=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
             "[QSEP]", "[SM]", "[INSUFF]", "|", ".", "?", "!", ":"]
    vocab += FIXTURE_WORDS
    vocab += list("abcdefghijklmnopqrstuvwxyz0123456789")
    vocab += [f"##{c}" for c in "abcdefghijklmnopqrstuvwxyz0123456789"]
    (backbone / "vocab.txt").write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizer(vocab_file=str(backbone / "vocab.txt"))
    tokenizer.save_pretrained(str(backbone))

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=HIDDEN, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=128,
    )
    BertModel(config).save_pretrained(str(backbone))

    def head_dir(role: str, weights: dict, dim: int | None = None):
        d = base / role
        d.mkdir()
        cfg = {"kind": "torch", "encoder_dir": "../backbone",
               "weights": "heads.pt", "max_length": 96}
        if dim is not None:
            cfg["dim"] = dim
        (d / "config.json").write_text(json.dumps(cfg))
        torch.save(weights, str(d / "heads.pt"))
        return str(d)

    torch.manual_seed(99)

    def linear_weights(prefix: str, out_features: int = 1) -> dict:
        return {
            f"{prefix}.weight": torch.randn(out_features, HIDDEN) * 0.2,
            f"{prefix}.bias": torch.randn(out_features) * 0.1,
        }

    encoder_path = head_dir(
        "encoder", linear_weights("proj", out_features=DECLARED_DIM), dim=DECLARED_DIM
    )
    rerank_path = head_dir("rerank", {**linear_weights("score_head"),
                                      **linear_weights("marker_head")})
    evidence_path = head_dir("evidence", {**linear_weights("score_head"),
                                          **linear_weights("marker_head")})
    rr_path = head_dir("rr", linear_weights("score_head"))
    return ServeConfig(
        encoder_checkpoint=encoder_path,
        rerank_checkpoint=rerank_path,
        evidence_checkpoint=evidence_path,
        rr_checkpoint=rr_path,
        dim=DECLARED_DIM,
    )


@pytest.fixture(scope="module")
def torch_config(tmp_path_factory) -> ServeConfig:
    return build_checkpoints(tmp_path_factory.mktemp("torch_ckpt"))


class TestTorchHeadsDirect:
    def test_encoder_projection_dim(self, torch_config):
        head = load_encoder_head(torch_config.encoder_checkpoint)
        out = head.embed(["first sentence here", "second sentence here"])
        assert out.shape == (2, DECLARED_DIM)

    def test_encoder_deterministic(self, torch_config):
        head = load_encoder_head(torch_config.encoder_checkpoint)
        a = head.embed(["question about topic"])
        b = head.embed(["question about topic"])
        assert (a == b).all()

    def test_rerank_marker_scores(self, torch_config):
        head = load_rerank_head(torch_config.rerank_checkpoint)
        p, s = head.score("why question", "topic", ["first sentence.", "second sentence.", "third."])
        assert 0.0 <= p <= 1.0
        assert len(s) == 3
        assert all(0.0 <= x <= 1.0 for x in s)

    def test_evidence_marker_scores(self, torch_config):
        head = load_evidence_head(torch_config.evidence_checkpoint)
        e, s = head.score("why question", [("topic", "first sentence."),
                                           ("topic", "second sentence.")])
        assert 0.0 <= e <= 1.0
        assert len(s) == 2

    def test_rr_score(self, torch_config):
        head = load_rr_head(torch_config.rr_checkpoint)
        a = head.score("why question", "because reasons here")
        assert 0.0 <= a <= 1.0
        assert a == head.score("why question", "because reasons here")


@pytest.fixture(scope="module")
def client(torch_config):
    return TestClient(create_app(torch_config))


class TestTorchService:
    def test_healthz_dims(self, client):
        assert client.get("/healthz").json()["dims"]["encoder"] == DECLARED_DIM

    def test_embed_endpoints(self, client):
        body = client.post("/embed_query", json={
            "question": "why about topic?",
            "chain": [{"title": "topic", "sentences": ["first sentence here."]}],
        }).json()
        assert len(body["vector"]) == DECLARED_DIM

    def test_rerank_endpoint(self, client):
        body = client.post("/rerank", json={
            "question": "why?",
            "chain": [],
            "paragraph": {"title": "topic", "sentences": ["first sentence.", "second."]},
        }).json()
        assert len(body["sentence_scores"]) == 2

    def test_repeat_identical(self, client):
        payload = {"question": "why?", "context": "because reasons"}
        assert (client.post("/rr_score", json=payload).json()
                == client.post("/rr_score", json=payload).json())
