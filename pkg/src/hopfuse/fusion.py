"""Score fusion for reranked sentences.

Two linear blends drive the pipeline: the reranker blend
``w * paragraph + (1 - w) * sentence`` used to rank sentences after
reranking, and the fixed half-half blend of paragraph relevance with the
evidence-set sentence score used to rank evidence candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


def _check_unit(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return float(value)


@dataclass(frozen=True)
class FusionConfig:
    """Weight for the reranker blend. The default 0.5 is used for unseen
    questions; per-dataset tuning is deliberately not provided."""

    w: float = 0.5

    def __post_init__(self):
        _check_unit("w", self.w)


def fuse_reranker(paragraph_score: float, sentence_score: float, config: FusionConfig | None = None) -> float:
    """Blend paragraph and sentence relevance: w*p + (1-w)*s."""
    w = (config or FusionConfig()).w
    _check_unit("paragraph_score", paragraph_score)
    _check_unit("sentence_score", sentence_score)
    return w * paragraph_score + (1.0 - w) * sentence_score


def fuse_evidence(paragraph_score: float, evidence_sentence_score: float) -> float:
    """Evidence ranking key: equal blend of paragraph relevance and the
    evidence-set sentence score."""
    _check_unit("paragraph_score", paragraph_score)
    _check_unit("evidence_sentence_score", evidence_sentence_score)
    return 0.5 * paragraph_score + 0.5 * evidence_sentence_score


@dataclass(frozen=True)
class ScoredSentence:
    """A corpus sentence with its pipeline scores.

    ``evidence_score`` is None until the sentence has been scored as part
    of an evidence candidate set; ``rank_key`` is only defined after that.
    """

    doc_id: str
    sent_idx: int
    paragraph_score: float
    sentence_score: float
    fused_score: float
    evidence_score: float | None = None

    def __post_init__(self):
        _check_unit("paragraph_score", self.paragraph_score)
        _check_unit("sentence_score", self.sentence_score)
        _check_unit("fused_score", self.fused_score)
        if self.evidence_score is not None:
            _check_unit("evidence_score", self.evidence_score)

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.sent_idx)

    @property
    def rank_key(self) -> float:
        if self.evidence_score is None:
            raise ValueError(f"sentence {self.key} has no evidence score yet")
        return fuse_evidence(self.paragraph_score, self.evidence_score)

    def with_evidence_score(self, evidence_score: float) -> "ScoredSentence":
        return replace(self, evidence_score=evidence_score)


def scored_sentence(doc_id: str, sent_idx: int, paragraph_score: float,
                    sentence_score: float, config: FusionConfig | None = None) -> ScoredSentence:
    """Construct a ScoredSentence with its fused score computed."""
    return ScoredSentence(
        doc_id=doc_id,
        sent_idx=sent_idx,
        paragraph_score=paragraph_score,
        sentence_score=sentence_score,
        fused_score=fuse_reranker(paragraph_score, sentence_score, config),
    )
