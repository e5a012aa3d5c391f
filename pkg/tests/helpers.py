"""Shared fixture builders used across test modules."""

import numpy as np

from hopfuse.backends import (
    BackendSuite,
    MockRRBackend,
    PlantedChainEncoder,
    PlantedEvidenceBackend,
    PlantedRerankBackend,
)
from hopfuse.corpus import ingest
from hopfuse.dense_index import build


def paragraph_record(doc_id: str, title: str | None = None, text: str | None = None) -> dict:
    if text is None:
        text = (
            f"Paragraph {doc_id} opens with a first sentence of plain filler words. "
            f"A second sentence for {doc_id} follows with several more plain words."
        )
    return {"doc_id": doc_id, "title": title if title is not None else doc_id, "text": text}


def build_planted_world(n_docs: int, chains: dict[str, list[str]]):
    """Corpus + index + backends where retrieval outcomes are forced.

    Titles equal doc_ids so the planted evidence backend can recognise
    chain membership from (title, text) pairs.
    """
    records = [paragraph_record(f"d{i:04d}") for i in range(n_docs)]
    corpus, _ = ingest(records)
    encoder = PlantedChainEncoder.from_chains(chains, corpus.doc_ids())
    index = build([(p.doc_id, encoder.encode_doc(p)) for p in corpus], dim=encoder.dim)
    suite = BackendSuite(
        encoder=encoder,
        reranker=PlantedRerankBackend(chains),
        evidence=PlantedEvidenceBackend(chains),
        rr=MockRRBackend(seed=0),
    )
    return corpus, index, suite


def planted_chains(n_questions: int, n_docs: int, seed: int = 7) -> dict[str, list[str]]:
    """Chains of 2-4 docs drawn from ids >= d0100 so the low-id documents
    retrieved as zero-score fillers never collide with planted targets."""
    rng = np.random.default_rng(seed)
    eligible = [f"d{i:04d}" for i in range(100, n_docs)]
    chains: dict[str, list[str]] = {}
    for q in range(n_questions):
        length = 2 + q % 3
        docs = rng.choice(len(eligible), size=length, replace=False)
        chains[f"planted question {q}?"] = [eligible[int(i)] for i in docs]
    return chains
