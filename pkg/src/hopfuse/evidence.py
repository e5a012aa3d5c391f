"""Evidence set maintenance: threshold selection, merging, capping, and
best-hop tracking.

The evidence set holds at most nine sentences ranked by
0.5*paragraph + 0.5*evidence_sentence score. Selection takes up to five
sentences strictly over a 0.1 threshold, falling back to the top two when
fewer qualify. The best hop is the one whose set-level score is maximal,
earliest hop on ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .fusion import ScoredSentence


@dataclass(frozen=True)
class EvidenceConfig:
    max_sentences: int = 9
    select_max: int = 5
    select_threshold: float = 0.1
    select_min: int = 2

    def __post_init__(self):
        if not (1 <= self.select_min <= self.select_max <= self.max_sentences):
            raise ValueError(
                f"need select_min <= select_max <= max_sentences, got "
                f"{self.select_min}/{self.select_max}/{self.max_sentences}"
            )
        if not 0.0 <= self.select_threshold <= 1.0:
            raise ValueError(f"select_threshold must be in [0, 1], got {self.select_threshold}")


def rank_sentences(sentences: Sequence[ScoredSentence]) -> list[ScoredSentence]:
    """Non-increasing rank_key; ties broken by ascending (doc_id, sent_idx)."""
    return sorted(sentences, key=lambda s: (-s.rank_key, s.doc_id, s.sent_idx))


@dataclass(frozen=True)
class EvidenceSet:
    """Scored sentence set for one hop. ``set_score`` is the set-level
    relevance produced by the evidence scorer for this hop."""

    hop: int
    sentences: tuple[ScoredSentence, ...]
    set_score: float

    def __post_init__(self):
        if not 0.0 <= self.set_score <= 1.0:
            raise ValueError(f"set_score must be in [0, 1], got {self.set_score}")
        keys = [s.key for s in self.sentences]
        if len(set(keys)) != len(keys):
            raise ValueError("evidence set contains duplicate sentences")
        ranks = [s.rank_key for s in self.sentences]
        if any(ranks[i] < ranks[i + 1] for i in range(len(ranks) - 1)):
            raise ValueError("evidence sentences are not in non-increasing rank order")

    @staticmethod
    def empty(hop: int) -> "EvidenceSet":
        return EvidenceSet(hop=hop, sentences=(), set_score=0.0)

    def keys(self) -> set[tuple[str, int]]:
        return {s.key for s in self.sentences}


def select_next(candidates: Sequence[ScoredSentence], config: EvidenceConfig | None = None) -> list[ScoredSentence]:
    """Pick the sentences that seed the next evidence set.

    Rank by 0.5*paragraph + 0.5*evidence score, take up to ``select_max``
    strictly over ``select_threshold``; when fewer than ``select_min``
    qualify, take the top ``select_min`` regardless of the threshold (or
    all candidates if there are fewer than that).
    """
    config = config or EvidenceConfig()
    ordered = rank_sentences(candidates)
    qualifying = [s for s in ordered if s.rank_key > config.select_threshold]
    if len(qualifying) >= config.select_min:
        return qualifying[: config.select_max]
    return ordered[: config.select_min]


def merge_and_cap(prior: EvidenceSet, selected_new: Sequence[ScoredSentence],
                  config: EvidenceConfig | None = None) -> list[ScoredSentence]:
    """Union prior members with newly selected sentences.

    On a duplicate (doc_id, sent_idx) the newer score version wins, since
    the evidence scorer re-scores sentences in the context of the current
    set each hop. The union is re-ranked and truncated to
    ``max_sentences``.
    """
    config = config or EvidenceConfig()
    merged: dict[tuple[str, int], ScoredSentence] = {s.key: s for s in prior.sentences}
    for sent in selected_new:
        merged[sent.key] = sent
    return rank_sentences(merged.values())[: config.max_sentences]


def best_hop(history: Sequence[EvidenceSet]) -> EvidenceSet:
    """The evidence set with maximal set-level score; earliest hop on ties."""
    if not history:
        raise ValueError("empty evidence history")
    best = history[0]
    for ev in history[1:]:
        if ev.set_score > best.set_score:
            best = ev
    return best
