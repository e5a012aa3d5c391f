"""Scoring backends: encoder, paragraph reranker, evidence-set scorer,
and relevance-truthfulness (RR) scorer.

Each backend is an interface with a deterministic hash-based mock (for
tests and desk-scale runs), and a remote client speaking JSON over HTTP
to a model server. Planted variants force analytically known outcomes
for pipeline recovery tests.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import httpx
import numpy as np

from .corpus import Paragraph
from .errors import BackendError, RemoteProtocolError, RemoteTransportError

QUERY_SEP = "[QSEP]"
_SCORE_SLACK = 1e-6


def serialize_query_chain(question: str, chain: Sequence[Paragraph]) -> str:
    """Canonical query-chain text: the question followed by each chain
    paragraph as ``[QSEP] title | sentences``."""
    parts = [question]
    for para in chain:
        parts.append(f"{QUERY_SEP} {para.title} | {' '.join(para.sentences())}")
    return " ".join(parts)


def serialize_doc(title: str, text: str) -> str:
    return f"{title} | {text}"


class EncoderBackend(ABC):
    """Shared question/document encoder; identical inputs must produce
    identical vectors."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def encode_query(self, question: str, chain: Sequence[Paragraph]) -> np.ndarray: ...

    @abstractmethod
    def encode_doc(self, paragraph: Paragraph) -> np.ndarray: ...


class RerankBackend(ABC):
    """Scores one retrieved paragraph against the query chain: a
    paragraph relevance score plus one relevance score per sentence."""

    @abstractmethod
    def score(self, question: str, chain: Sequence[Paragraph],
              paragraph: Paragraph) -> tuple[float, list[float]]: ...


class EvidenceBackend(ABC):
    """Scores a candidate evidence sentence set: a set-level sufficiency
    score plus per-sentence relevance in the context of the set."""

    @abstractmethod
    def score(self, question: str,
              sentences: Sequence[tuple[str, str]]) -> tuple[float, list[float]]: ...


class RRBackend(ABC):
    """Scores a (question, context) pair for relevance and truthfulness."""

    @abstractmethod
    def score(self, question: str, context: str) -> float: ...


def _stable_u64(seed: int, *parts: str) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def _stable_unit(seed: int, *parts: str) -> float:
    return _stable_u64(seed, *parts) / 2.0**64


class MockHashEncoder(EncoderBackend):
    """Deterministic hashed bag-of-words projection.

    Each token is hashed to an axis and a sign; the accumulated vector is
    L2-normalized. Equal texts map to equal vectors and disjoint
    vocabularies are near-orthogonal at moderate dimensions.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self._dim = dim
        self.seed = seed

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        for token in text.lower().split():
            h = _stable_u64(self.seed, "tok", token)
            axis = h % self._dim
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[axis] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed_text(t) for t in texts]) if texts else np.empty((0, self._dim))

    def encode_query(self, question: str, chain: Sequence[Paragraph]) -> np.ndarray:
        return self.embed_text(serialize_query_chain(question, chain))

    def encode_doc(self, paragraph: Paragraph) -> np.ndarray:
        return self.embed_text(serialize_doc(paragraph.title, paragraph.text))


class MockRerankBackend(RerankBackend):
    """Hash-driven pseudo-scores; arbitrary but a pure function of inputs."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question, chain, paragraph):
        chain_key = "|".join(p.doc_id for p in chain)
        p = _stable_unit(self.seed, "rerank-p", question, chain_key, paragraph.doc_id)
        s = [
            _stable_unit(self.seed, "rerank-s", question, paragraph.doc_id, str(i))
            for i in range(paragraph.sentence_count)
        ]
        return p, s


class MockEvidenceBackend(EvidenceBackend):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question, sentences):
        joined = "\x1e".join(f"{t}|{s}" for t, s in sentences)
        e = _stable_unit(self.seed, "evidence-e", question, joined)
        s_e = [_stable_unit(self.seed, "evidence-s", question, t, s) for t, s in sentences]
        return e, s_e


class MockRRBackend(RRBackend):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question, context):
        return _stable_unit(self.seed, "rr", question, context)


class PlantedChainEncoder(EncoderBackend):
    """Encoder whose retrieval outcome is forced by construction.

    Every document owns a distinct basis axis. A query whose (question,
    chain-prefix) appears in the chain table encodes to the basis vector
    of the next planted document; unknown prefixes encode to the zero
    vector, making every eligible document score 0.
    """

    def __init__(self, chain_table: dict[tuple[str, tuple[str, ...]], str], axes: dict[str, int]):
        self.chain_table = dict(chain_table)
        self.axes = dict(axes)
        self._dim = max(axes.values()) + 1 if axes else 1

    @classmethod
    def from_chains(cls, chains: dict[str, Sequence[str]], all_doc_ids: Sequence[str]) -> "PlantedChainEncoder":
        axes = {doc_id: i for i, doc_id in enumerate(all_doc_ids)}
        table: dict[tuple[str, tuple[str, ...]], str] = {}
        for question, chain in chains.items():
            for t, target in enumerate(chain):
                table[(question, tuple(chain[:t]))] = target
        return cls(table, axes)

    @property
    def dim(self) -> int:
        return self._dim

    def _basis(self, doc_id: str | None) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        if doc_id is not None and doc_id in self.axes:
            vec[self.axes[doc_id]] = 1.0
        return vec

    def encode_query(self, question: str, chain: Sequence[Paragraph]) -> np.ndarray:
        prefix = tuple(p.doc_id for p in chain)
        return self._basis(self.chain_table.get((question, prefix)))

    def encode_doc(self, paragraph: Paragraph) -> np.ndarray:
        return self._basis(paragraph.doc_id)


class PlantedRerankBackend(RerankBackend):
    """Scores 1.0 for paragraphs on the question's planted chain, else 0."""

    def __init__(self, chains: dict[str, Sequence[str]]):
        self.chains = {q: set(c) for q, c in chains.items()}

    def score(self, question, chain, paragraph):
        p = 1.0 if paragraph.doc_id in self.chains.get(question, set()) else 0.0
        return p, [p] * paragraph.sentence_count


class PlantedEvidenceBackend(EvidenceBackend):
    """Set score is the fraction of the planted chain whose documents are
    present among the candidate sentences (matched by title, which the
    planted fixtures set to the doc_id).

    Per-sentence scores rise with chain position so the newest planted
    document always outranks older ones and can never be tie-broken out
    of the capped selection; off-chain sentences score 0.
    """

    def __init__(self, chains: dict[str, Sequence[str]]):
        self.chains = {q: list(c) for q, c in chains.items()}

    def score(self, question, sentences):
        chain = self.chains.get(question, [])
        members = set(chain)
        titles = {t for t, _ in sentences}
        covered = len(members & titles)
        e = covered / len(chain) if chain else 0.0
        s_e = [
            (chain.index(t) + 1) / len(chain) if t in members else 0.0
            for t, _ in sentences
        ]
        return e, s_e


@dataclass
class RemoteSession:
    """Shared HTTP plumbing for the remote backends.

    Transport failures are retried with exponential backoff up to
    ``max_retries`` attempts, then raised as hard errors. Concurrent
    callers are throttled by an in-flight cap. Protocol-level problems
    (bad status, malformed payloads) are never retried.
    """

    base_url: str
    timeout: float = 30.0
    max_retries: int = 3
    retry_backoff: float = 0.05
    max_in_flight: int = 8
    client: Optional[httpx.Client] = None
    _sem: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        if self.client is None:
            self.client = httpx.Client(base_url=self.base_url, timeout=self.timeout)
        self._sem = threading.Semaphore(self.max_in_flight)

    def post(self, path: str, payload: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                with self._sem:
                    response = self.client.post(path, json=payload)
                break
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.retry_backoff * (2**attempt))
        else:
            raise RemoteTransportError(
                f"POST {path} failed after {self.max_retries} attempts: {last_exc}"
            ) from last_exc
        if response.status_code != 200:
            raise RemoteProtocolError(
                f"POST {path} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
        except json.JSONDecodeError as exc:
            raise RemoteProtocolError(f"POST {path} returned non-JSON body") from exc
        if not isinstance(body, dict):
            raise RemoteProtocolError(f"POST {path} returned non-object body")
        return body

    def close(self) -> None:
        self.client.close()


def _unit_score(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise RemoteProtocolError(f"{name} is not a number: {value!r}") from exc
    if not np.isfinite(v):
        raise RemoteProtocolError(f"{name} is not finite: {v}")
    # tolerate float jitter at the bounds, reject genuine range violations
    if -_SCORE_SLACK <= v < 0.0:
        return 0.0
    if 1.0 < v <= 1.0 + _SCORE_SLACK:
        return 1.0
    if not 0.0 <= v <= 1.0:
        raise RemoteProtocolError(f"{name} out of [0, 1]: {v}")
    return v


def _unit_scores(values, name: str, expected_len: int) -> list[float]:
    if not isinstance(values, list) or len(values) != expected_len:
        raise RemoteProtocolError(
            f"{name} has length {len(values) if isinstance(values, list) else 'n/a'}, expected {expected_len}"
        )
    return [_unit_score(v, f"{name}[{i}]") for i, v in enumerate(values)]


def _vector(values, dim: int) -> np.ndarray:
    if not isinstance(values, list) or len(values) != dim:
        raise RemoteProtocolError(
            f"vector has length {len(values) if isinstance(values, list) else 'n/a'}, expected {dim}"
        )
    vec = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise RemoteProtocolError("vector contains non-finite entries")
    return vec


def _chain_payload(chain: Sequence[Paragraph]) -> list[dict]:
    return [{"title": p.title, "sentences": p.sentences()} for p in chain]


class RemoteEncoderBackend(EncoderBackend):
    def __init__(self, session: RemoteSession, dim: int):
        self.session = session
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def encode_query(self, question, chain):
        body = self.session.post(
            "/embed_query", {"question": question, "chain": _chain_payload(chain)}
        )
        return _vector(body.get("vector"), self._dim)

    def encode_doc(self, paragraph):
        body = self.session.post(
            "/embed_doc",
            {"title": paragraph.title, "text": paragraph.text, "sentences": paragraph.sentences()},
        )
        return _vector(body.get("vector"), self._dim)

    def embed_text(self, text: str) -> np.ndarray:
        body = self.session.post("/embed_doc", {"title": "", "text": text})
        return _vector(body.get("vector"), self._dim)

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        """Order-preserving batch embed; requests run concurrently up to
        the session's in-flight cap."""
        if not texts:
            return np.empty((0, self._dim))
        if len(texts) == 1:
            return np.stack([self.embed_text(texts[0])])
        with ThreadPoolExecutor(max_workers=self.session.max_in_flight) as pool:
            return np.stack(list(pool.map(self.embed_text, texts)))


class RemoteRerankBackend(RerankBackend):
    def __init__(self, session: RemoteSession):
        self.session = session

    def score(self, question, chain, paragraph):
        body = self.session.post(
            "/rerank",
            {
                "question": question,
                "chain": _chain_payload(chain),
                "paragraph": {"title": paragraph.title, "sentences": paragraph.sentences()},
            },
        )
        p = _unit_score(body.get("paragraph_score"), "paragraph_score")
        s = _unit_scores(body.get("sentence_scores"), "sentence_scores", paragraph.sentence_count)
        return p, s


class RemoteEvidenceBackend(EvidenceBackend):
    def __init__(self, session: RemoteSession):
        self.session = session

    def score(self, question, sentences):
        body = self.session.post(
            "/evidence_score",
            {"question": question, "sentences": [{"title": t, "text": s} for t, s in sentences]},
        )
        e = _unit_score(body.get("set_score"), "set_score")
        s_e = _unit_scores(body.get("sentence_scores"), "sentence_scores", len(sentences))
        return e, s_e


class RemoteRRBackend(RRBackend):
    def __init__(self, session: RemoteSession):
        self.session = session

    def score(self, question, context):
        body = self.session.post("/rr_score", {"question": question, "context": context})
        return _unit_score(body.get("score"), "score")


@dataclass
class BackendSuite:
    """The backend bundle consumed by the hop loop and the combiner."""

    encoder: EncoderBackend
    reranker: RerankBackend
    evidence: EvidenceBackend
    rr: RRBackend | None = None


def mock_suite(dim: int = 256, seed: int = 0) -> BackendSuite:
    return BackendSuite(
        encoder=MockHashEncoder(dim=dim, seed=seed),
        reranker=MockRerankBackend(seed=seed),
        evidence=MockEvidenceBackend(seed=seed),
        rr=MockRRBackend(seed=seed),
    )


def remote_suite(base_url: str, dim: int, **session_kwargs) -> BackendSuite:
    session = RemoteSession(base_url=base_url, **session_kwargs)
    return BackendSuite(
        encoder=RemoteEncoderBackend(session, dim),
        reranker=RemoteRerankBackend(session),
        evidence=RemoteEvidenceBackend(session),
        rr=RemoteRRBackend(session),
    )
