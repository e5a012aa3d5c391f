"""The multi-hop retrieve / rerank / evidence-score loop.

Each hop encodes the growing query chain, retrieves the top-k unseen
paragraphs, reranks them into per-sentence scores, re-scores the pooled
candidate sentences as an evidence set, and appends the paragraphs of
the top evidence sentences to the chain. After the final hop the
evidence set of the best-scoring hop wins.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

from .backends import BackendSuite
from .corpus import Corpus, Paragraph
from .dense_index import SearchHit
from .errors import PipelineError
from .evidence import (
    EvidenceConfig,
    EvidenceSet,
    best_hop,
    merge_and_cap,
    rank_sentences,
    select_next,
)
from .fusion import FusionConfig, ScoredSentence, scored_sentence


@dataclass(frozen=True)
class IteratorConfig:
    """Loop parameters. ``k`` defaults to 60 as used for bulk dataset
    builds; evaluation-style runs typically raise it to 150."""

    t_max: int = 4
    k: int = 60
    fusion: FusionConfig = field(default_factory=FusionConfig)
    evidence: EvidenceConfig = field(default_factory=EvidenceConfig)
    dedup_across_hops: bool = True
    early_exit_score: float | None = None

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.early_exit_score is not None and not 0.0 <= self.early_exit_score <= 1.0:
            raise ValueError("early_exit_score must be in [0, 1]")


@dataclass
class HopState:
    """Mutable per-question state carried across hops."""

    question: str
    chain: list[Paragraph] = field(default_factory=list)
    hop: int = 0
    retrieved: set[str] = field(default_factory=set)
    evidence_history: list[EvidenceSet] = field(default_factory=list)

    def chain_ids(self) -> list[str]:
        return [p.doc_id for p in self.chain]


@dataclass(frozen=True)
class IterationResult:
    question: str
    best: EvidenceSet
    history: tuple[EvidenceSet, ...]
    trace: tuple[dict, ...]
    final_chain: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "question": self.question,
            "best_hop": self.best.hop,
            "best_score": self.best.set_score,
            "final_chain": list(self.final_chain),
            "hops": [dict(h) for h in self.trace],
        }


@dataclass(frozen=True)
class RunFailure:
    question: str
    error: str


RunOutcome = Union[IterationResult, RunFailure]


def _sentence_record(s: ScoredSentence) -> dict:
    return {
        "doc_id": s.doc_id,
        "sent_idx": s.sent_idx,
        "paragraph_score": s.paragraph_score,
        "sentence_score": s.sentence_score,
        "fused_score": s.fused_score,
        "evidence_score": s.evidence_score,
        "rank_key": s.rank_key,
    }


def sentence_from_record(rec: dict) -> ScoredSentence:
    return ScoredSentence(
        doc_id=rec["doc_id"],
        sent_idx=rec["sent_idx"],
        paragraph_score=rec["paragraph_score"],
        sentence_score=rec["sentence_score"],
        fused_score=rec["fused_score"],
        evidence_score=rec["evidence_score"],
    )


def run(question: str, corpus: Corpus, index, backends: BackendSuite,
        config: IteratorConfig | None = None) -> IterationResult:
    """Execute the hop loop for one question.

    Backend failures abort the run with the partial trace attached. An
    empty retrieval records the hop with an empty evidence set and the
    loop continues.
    """
    config = config or IteratorConfig()
    state = HopState(question=question)
    trace: list[dict] = []
    prior = EvidenceSet.empty(hop=-1)
    for t in range(config.t_max):
        state.hop = t
        chain_before = state.chain_ids()
        try:
            query_vec = backends.encoder.encode_query(question, state.chain)
            exclude = set(chain_before)
            if config.dedup_across_hops:
                exclude |= state.retrieved
            hits: list[SearchHit] = index.search(query_vec, config.k, exclude)
            state.retrieved.update(h.doc_id for h in hits)

            if not hits:
                # corpus exhausted: record the hop with empty evidence and
                # keep going; earlier hops stay in the history for best_hop
                current = EvidenceSet.empty(hop=t)
                state.evidence_history.append(current)
                trace.append({
                    "hop": t,
                    "chain": chain_before,
                    "hits": [],
                    "pool_size": 0,
                    "set_score": 0.0,
                    "evidence": [],
                    "appended": [],
                })
                prior = current
                continue

            new_sentences: list[ScoredSentence] = []
            for hit in hits:
                para = corpus.get(hit.doc_id)
                p_score, sent_scores = backends.reranker.score(question, state.chain, para)
                for i, s_val in enumerate(sent_scores):
                    new_sentences.append(
                        scored_sentence(para.doc_id, i, p_score, s_val, config.fusion)
                    )

            # Candidate pool: this hop's reranked sentences plus the prior
            # evidence members. A re-retrieved sentence keeps its fresh
            # rerank scores; everything gets a fresh evidence score.
            pool: dict[tuple[str, int], ScoredSentence] = {}
            for sent in new_sentences:
                pool[sent.key] = sent
            for sent in prior.sentences:
                pool.setdefault(sent.key, sent)
            pool_list = list(pool.values())

            if pool_list:
                texts = [
                    (corpus.get(s.doc_id).title, corpus.get(s.doc_id).sentence(s.sent_idx))
                    for s in pool_list
                ]
                set_score, sent_evidence = backends.evidence.score(question, texts)
                scored_pool = [
                    s.with_evidence_score(se) for s, se in zip(pool_list, sent_evidence)
                ]
            else:
                set_score, scored_pool = 0.0, []

            selected = select_next(scored_pool, config.evidence)
            # prior members carry this hop's fresh evidence scores, which
            # can reorder them, so re-rank before merging
            fresh = {s.key: s for s in scored_pool}
            prior_refreshed = EvidenceSet(
                hop=prior.hop,
                sentences=tuple(rank_sentences([fresh[s.key] for s in prior.sentences])),
                set_score=prior.set_score,
            )
            members = merge_and_cap(prior_refreshed, selected, config.evidence)
            current = EvidenceSet(hop=t, sentences=tuple(members), set_score=set_score)

            appended: list[str] = []
            in_chain = set(chain_before)
            for sent in members[: config.evidence.select_max]:
                if sent.doc_id not in in_chain:
                    state.chain.append(corpus.get(sent.doc_id))
                    in_chain.add(sent.doc_id)
                    appended.append(sent.doc_id)
        except Exception as exc:
            raise PipelineError(
                f"hop {t} failed for question {question!r}: {exc}", partial_trace=trace
            ) from exc

        state.evidence_history.append(current)
        trace.append(
            {
                "hop": t,
                "chain": chain_before,
                "hits": [{"doc_id": h.doc_id, "score": h.score} for h in hits],
                "pool_size": len(pool_list),
                "set_score": set_score,
                "evidence": [_sentence_record(s) for s in current.sentences],
                "appended": appended,
            }
        )
        prior = current
        if config.early_exit_score is not None and set_score >= config.early_exit_score:
            break

    best = best_hop(state.evidence_history)
    return IterationResult(
        question=question,
        best=best,
        history=tuple(state.evidence_history),
        trace=tuple(trace),
        final_chain=tuple(state.chain_ids()),
    )


def batch_run(questions: Sequence[str], corpus: Corpus, index, backends: BackendSuite,
              config: IteratorConfig | None = None, workers: int = 1) -> list[RunOutcome]:
    """Order-preserving map of ``run`` over questions.

    Per-question failures are isolated into RunFailure records. Output is
    deterministic regardless of the worker count because questions do not
    share mutable state.
    """
    config = config or IteratorConfig()

    def one(question: str) -> RunOutcome:
        try:
            return run(question, corpus, index, backends, config)
        except Exception as exc:
            return RunFailure(question=question, error=str(exc))

    if not questions:
        return []
    if workers <= 1:
        return [one(q) for q in questions]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, questions))


def trace_line(outcome: RunOutcome, extras: dict | None = None) -> str:
    """One canonical JSON line per question for the trace file."""
    if isinstance(outcome, RunFailure):
        record: dict = {"question": outcome.question, "error": outcome.error}
    else:
        record = outcome.to_record()
    if extras:
        record.update(extras)
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
