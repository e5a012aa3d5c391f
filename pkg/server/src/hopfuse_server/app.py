"""FastAPI application serving the scoring heads over JSON HTTP.

Endpoints mirror the client contract: /embed_query, /embed_doc, /rerank,
/evidence_score, /rr_score, plus /healthz reporting declared dims and
checkpoint digests. Schema violations return 400; inference failures
return 500 with an error body.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .heads import (
    CheckpointError,
    checkpoint_digest,
    load_encoder_head,
    load_evidence_head,
    load_rerank_head,
    load_rr_head,
)
from .serialization import doc_text, query_text


@dataclass
class ServeConfig:
    """Checkpoint paths per head plus runtime knobs. ``dim`` is the
    declared encoder output dimension, validated at startup."""

    encoder_checkpoint: str
    rerank_checkpoint: str
    evidence_checkpoint: str
    rr_checkpoint: str
    dim: int
    device: str = "cpu"
    max_batch: int = 16

    @classmethod
    def from_file(cls, path: str) -> "ServeConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**raw)


class ChainParagraph(BaseModel):
    title: str
    sentences: list[str]


class EmbedQueryRequest(BaseModel):
    question: str
    chain: list[ChainParagraph] = []


class EmbedDocRequest(BaseModel):
    text: str
    title: str = ""
    sentences: list[str] | None = None


class RerankRequest(BaseModel):
    question: str
    chain: list[ChainParagraph] = []
    paragraph: ChainParagraph


class EvidenceSentence(BaseModel):
    title: str
    text: str


class EvidenceRequest(BaseModel):
    question: str
    sentences: list[EvidenceSentence]


class RRRequest(BaseModel):
    question: str
    context: str


@dataclass
class _Heads:
    encoder: object
    rerank: object
    evidence: object
    rr: object
    digests: dict = field(default_factory=dict)


def _load_heads(config: ServeConfig) -> _Heads:
    encoder = load_encoder_head(config.encoder_checkpoint, config.device, config.max_batch)
    if encoder.dim != config.dim:
        raise CheckpointError(
            f"declared dim {config.dim} does not match encoder checkpoint dim {encoder.dim}"
        )
    return _Heads(
        encoder=encoder,
        rerank=load_rerank_head(config.rerank_checkpoint, config.device),
        evidence=load_evidence_head(config.evidence_checkpoint, config.device),
        rr=load_rr_head(config.rr_checkpoint, config.device),
        digests={
            "encoder": checkpoint_digest(config.encoder_checkpoint),
            "rerank": checkpoint_digest(config.rerank_checkpoint),
            "evidence": checkpoint_digest(config.evidence_checkpoint),
            "rr": checkpoint_digest(config.rr_checkpoint),
        },
    )


def create_app(config: ServeConfig) -> FastAPI:
    heads = _load_heads(config)
    app = FastAPI(title="hopfuse model server")
    app.state.heads = heads

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(Exception)
    async def inference_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "dims": {"encoder": heads.encoder.dim},
            "checkpoints": heads.digests,
        }

    @app.post("/embed_query")
    def embed_query(request: EmbedQueryRequest):
        text = query_text(request.question, [(p.title, p.sentences) for p in request.chain])
        vector = app.state.heads.encoder.embed([text])[0]
        return {"vector": [float(x) for x in vector]}

    @app.post("/embed_doc")
    def embed_doc(request: EmbedDocRequest):
        vector = app.state.heads.encoder.embed([doc_text(request.title, request.text)])[0]
        return {"vector": [float(x) for x in vector]}

    @app.post("/rerank")
    def rerank(request: RerankRequest):
        query = query_text(request.question, [(p.title, p.sentences) for p in request.chain])
        p, s = app.state.heads.rerank.score(
            query, request.paragraph.title, request.paragraph.sentences
        )
        return {"paragraph_score": p, "sentence_scores": s}

    @app.post("/evidence_score")
    def evidence_score(request: EvidenceRequest):
        e, s = app.state.heads.evidence.score(
            request.question, [(s.title, s.text) for s in request.sentences]
        )
        return {"set_score": e, "sentence_scores": s}

    @app.post("/rr_score")
    def rr_score(request: RRRequest):
        return {"score": app.state.heads.rr.score(request.question, request.context)}

    return app
