"""Combining an offline-generated rationale with a retrieved context.

Four strategies merge the two components using their
relevance-truthfulness (RR) scores: plain concatenation, picking the
higher-scoring component, defaulting to the rationale unless the
retrieved context clears a threshold, and including whichever components
clear a threshold (falling back to concatenation when neither does).
Concatenations prefix the rationale with a literal ``Further
Explanation:`` header to mimic a document title; over-budget outputs are
truncated from the retrieved component only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .backends import RRBackend
from .context import DEFAULT_BUDGET, Tokenizer, WhitespaceTokenizer
from .errors import ContextError

RATIONALE = "rationale"
ITERATOR = "iterator"

PROV_RATIONALE_ONLY = "rationale_only"
PROV_ITERATOR_ONLY = "iterator_only"
PROV_BOTH = "both"

EXPLANATION_HEADER = "Further Explanation:"

NAIVE = "naive"
MAX_SCORE = "max_score"
RATIONALE_DEFAULT = "rationale_default"
EITHER_OR_BOTH = "either_or_both"

# The eight RR-score thresholds spanning 0.0005 .. 0.9 used for the
# threshold-bearing strategies.
DEFAULT_THRESHOLDS = (0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 0.9)


@dataclass(frozen=True)
class RRScoredComponent:
    kind: str
    text: str
    rr_score: float

    def __post_init__(self):
        if self.kind not in (RATIONALE, ITERATOR):
            raise ValueError(f"kind must be {RATIONALE!r} or {ITERATOR!r}, got {self.kind!r}")
        if not 0.0 <= self.rr_score <= 1.0:
            raise ValueError(f"rr_score must be in [0, 1], got {self.rr_score}")


@dataclass(frozen=True)
class CombinationStrategy:
    variant: str
    threshold: float | None = None

    def __post_init__(self):
        if self.variant not in (NAIVE, MAX_SCORE, RATIONALE_DEFAULT, EITHER_OR_BOTH):
            raise ValueError(f"unknown strategy variant {self.variant!r}")
        if self.variant in (RATIONALE_DEFAULT, EITHER_OR_BOTH):
            if self.threshold is None:
                raise ValueError(f"{self.variant} requires a threshold")
            if not 0.0 <= self.threshold <= 1.0:
                raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")

    @classmethod
    def naive(cls) -> "CombinationStrategy":
        return cls(NAIVE)

    @classmethod
    def max_score(cls) -> "CombinationStrategy":
        return cls(MAX_SCORE)

    @classmethod
    def rationale_default(cls, threshold: float) -> "CombinationStrategy":
        return cls(RATIONALE_DEFAULT, threshold)

    @classmethod
    def either_or_both(cls, threshold: float) -> "CombinationStrategy":
        return cls(EITHER_OR_BOTH, threshold)

    @property
    def label(self) -> str:
        if self.threshold is None:
            return self.variant
        return f"{self.variant}_{self.threshold:g}"


@dataclass(frozen=True)
class CombinedContext:
    text: str
    provenance: str
    truncated: bool


def _terminated(text: str) -> str:
    text = text.strip()
    if text and text[-1] not in ".!?":
        text += "."
    return text


def _concat_text(rationale_text: str, iterator_text: str) -> tuple[str, str]:
    """(non-truncatable prefix, truncatable tail) of the concatenation."""
    return f"{EXPLANATION_HEADER} {_terminated(rationale_text)}", iterator_text.strip()


def _fit(prefix: str, tail: str, tokenizer: Tokenizer, budget: int) -> tuple[str, bool]:
    """Budget the output, cutting whitespace tokens from the tail only.

    The prefix (which contains any rationale text) is never truncated; if
    it alone exceeds the budget that is an error.
    """
    full = f"{prefix} {tail}".strip() if prefix and tail else (prefix or tail)
    if tokenizer.count(full) <= budget:
        return full, False
    if prefix and tokenizer.count(prefix) > budget:
        raise ContextError("rationale component alone exceeds the token budget")
    tokens = tail.split()
    lo, hi = 0, len(tokens)  # max kept tokens such that the output fits
    while lo < hi:
        mid = (lo + hi + 1) // 2
        candidate = f"{prefix} {' '.join(tokens[:mid])}".strip() if prefix else " ".join(tokens[:mid])
        if tokenizer.count(candidate) <= budget:
            lo = mid
        else:
            hi = mid - 1
    kept = " ".join(tokens[:lo])
    out = f"{prefix} {kept}".strip() if prefix else kept
    if not prefix and tokenizer.count(out) > budget:
        raise ContextError("retrieved component cannot fit the token budget")
    return out, True


def combine(rationale: RRScoredComponent, iterator: RRScoredComponent,
            strategy: CombinationStrategy, tokenizer: Tokenizer | None = None,
            budget: int = DEFAULT_BUDGET) -> CombinedContext:
    """Apply one combination strategy to the two scored components."""
    if rationale.kind != RATIONALE or iterator.kind != ITERATOR:
        raise ValueError("combine expects (rationale, iterator) components in that order")
    tokenizer = tokenizer or WhitespaceTokenizer()

    if strategy.variant == NAIVE:
        choice = PROV_BOTH
    elif strategy.variant == MAX_SCORE:
        choice = PROV_RATIONALE_ONLY if rationale.rr_score >= iterator.rr_score else PROV_ITERATOR_ONLY
    elif strategy.variant == RATIONALE_DEFAULT:
        choice = PROV_ITERATOR_ONLY if iterator.rr_score > strategy.threshold else PROV_RATIONALE_ONLY
    else:  # EITHER_OR_BOTH
        take_rationale = rationale.rr_score > strategy.threshold
        take_iterator = iterator.rr_score > strategy.threshold
        if take_rationale and take_iterator:
            choice = PROV_BOTH
        elif take_rationale:
            choice = PROV_RATIONALE_ONLY
        elif take_iterator:
            choice = PROV_ITERATOR_ONLY
        else:
            choice = PROV_BOTH  # fall back to the plain concatenation

    if choice == PROV_BOTH:
        prefix, tail = _concat_text(rationale.text, iterator.text)
    elif choice == PROV_RATIONALE_ONLY:
        prefix, tail = rationale.text.strip(), ""
    else:
        prefix, tail = "", iterator.text.strip()
    text, truncated = _fit(prefix, tail, tokenizer, budget)
    return CombinedContext(text=text, provenance=choice, truncated=truncated)


def default_strategy_grid(thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> list[CombinationStrategy]:
    """The full strategy sweep: plain concatenation, max-score, and the
    two threshold strategies at each threshold (18 variants with the
    default eight thresholds)."""
    grid = [CombinationStrategy.naive(), CombinationStrategy.max_score()]
    for t in thresholds:
        grid.append(CombinationStrategy.rationale_default(t))
    for t in thresholds:
        grid.append(CombinationStrategy.either_or_both(t))
    return grid


def batch_combine(samples: Sequence[dict], strategy: CombinationStrategy,
                  rr_backend: RRBackend, tokenizer: Tokenizer | None = None,
                  budget: int = DEFAULT_BUDGET) -> tuple[list[dict], dict]:
    """Score and combine each sample's components; per-sample failures
    are isolated into error records.

    Samples carry ``question``, ``rationale`` and ``context`` (the
    retrieved component); ``id`` and ``answer`` pass through. Returns the
    output records plus a provenance summary.
    """
    records: list[dict] = []
    counts = {PROV_RATIONALE_ONLY: 0, PROV_ITERATOR_ONLY: 0, PROV_BOTH: 0}
    failures = 0
    for sample in samples:
        try:
            question = sample["question"]
            rationale = RRScoredComponent(
                RATIONALE, sample["rationale"], rr_backend.score(question, sample["rationale"])
            )
            iterator = RRScoredComponent(
                ITERATOR, sample["context"], rr_backend.score(question, sample["context"])
            )
            combined = combine(rationale, iterator, strategy, tokenizer, budget)
        except Exception as exc:
            failures += 1
            record = {"question": sample.get("question"), "error": str(exc)}
            for key in ("id",):
                if key in sample:
                    record[key] = sample[key]
            records.append(record)
            continue
        counts[combined.provenance] += 1
        record = {
            "question": question,
            "context": combined.text,
            "provenance": combined.provenance,
            "truncated": combined.truncated,
            "rr_rationale": rationale.rr_score,
            "rr_iterator": iterator.rr_score,
        }
        for key in ("id", "answer"):
            if key in sample:
                record[key] = sample[key]
        records.append(record)
    total = sum(counts.values())
    summary = {
        "strategy": strategy.label,
        "total": total,
        "failures": failures,
        "counts": dict(counts),
        "percent": {
            key: (100.0 * value / total if total else 0.0) for key, value in counts.items()
        },
    }
    return records, summary


def combine_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
