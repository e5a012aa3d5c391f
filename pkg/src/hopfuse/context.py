"""Turns an evidence set into a serialized, token-budgeted context.

Each selected sentence is expanded with its neighboring sentences, the
expansions are merged per paragraph into a titled fragment, and whole
fragments are greedily packed into the budget in order of
0.5*paragraph_score + 0.5*max_evidence_score.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus
from .errors import ContextError, CorpusLookupError
from .evidence import EvidenceSet
from .fusion import fuse_evidence

DEFAULT_BUDGET = 512
# Reader-input separator between question and context; the literal
# two-character sequence used by UnifiedQA-style formats.
READER_SEPARATOR = " \\n "


class Tokenizer(ABC):
    """Counting-only tokenizer interface so a model tokenizer can be
    plugged in for bit-parity with a trained reader."""

    @abstractmethod
    def count(self, text: str) -> int: ...


class WhitespaceTokenizer(Tokenizer):
    def count(self, text: str) -> int:
        return len(text.split())


@dataclass(frozen=True)
class ContextFragment:
    """A titled paragraph fragment: the selected sentences of one
    paragraph expanded by one neighbor on each side, merged where the
    expansions touch."""

    doc_id: str
    title: str
    sent_indices: tuple[int, ...]
    text: str
    order_key: float


@dataclass(frozen=True)
class BuiltContext:
    fragments: tuple[ContextFragment, ...]
    serialized: str
    token_count: int
    initial_paragraph: str | None = None


def recover_fragments(evidence: EvidenceSet, corpus: Corpus) -> list[ContextFragment]:
    """One fragment per paragraph appearing in the evidence set.

    Neighbor expansion is applied per selected sentence ({i-1, i, i+1}
    clipped to the paragraph) and the expanded index sets are unioned;
    non-touching runs are joined with a space in the fragment text.
    Fragments come back in evidence-rank order of each paragraph's first
    selected sentence (the stable tie order for serialization).
    """
    by_doc: dict[str, list] = {}
    for sent in evidence.sentences:
        by_doc.setdefault(sent.doc_id, []).append(sent)
    fragments: list[ContextFragment] = []
    for doc_id, group in by_doc.items():
        try:
            para = corpus.get(doc_id)
        except CorpusLookupError as exc:
            raise ContextError(f"evidence sentence ({doc_id!r}, {group[0].sent_idx}) "
                               f"not resolvable in corpus") from exc
        n = para.sentence_count
        indices: set[int] = set()
        for sent in group:
            if not 0 <= sent.sent_idx < n:
                raise ContextError(
                    f"evidence sentence ({doc_id!r}, {sent.sent_idx}) out of range "
                    f"({n} sentences)"
                )
            indices.update(i for i in (sent.sent_idx - 1, sent.sent_idx, sent.sent_idx + 1)
                           if 0 <= i < n)
        ordered = sorted(indices)
        runs: list[list[int]] = [[ordered[0]]]
        for idx in ordered[1:]:
            if idx == runs[-1][-1] + 1:
                runs[-1].append(idx)
            else:
                runs.append([idx])
        pieces = []
        for r in runs:
            start = para.sentence_spans[r[0]][0]
            end = para.sentence_spans[r[-1]][1]
            pieces.append(para.text[start:end])
        max_evidence = max(s.evidence_score for s in group)
        paragraph_score = max(s.paragraph_score for s in group)
        fragments.append(
            ContextFragment(
                doc_id=doc_id,
                title=para.title,
                sent_indices=tuple(ordered),
                text=" ".join(pieces),
                order_key=fuse_evidence(paragraph_score, max_evidence),
            )
        )
    return fragments


def _render(fragment: ContextFragment) -> str:
    text = fragment.text.strip()
    if text and text[-1] not in ".!?":
        text += "."
    return f"{fragment.title}: {text}"


def serialize(fragments: Sequence[ContextFragment], tokenizer: Tokenizer | None = None,
              budget: int = DEFAULT_BUDGET, initial_paragraph: str | None = None) -> BuiltContext:
    """Pack whole fragments into the budget.

    Fragments are emitted in non-increasing order_key (stable for ties);
    each is included only when the whole serialization still fits, so a
    sentence is never truncated mid-way. An initial paragraph, when
    given, is placed first verbatim and counted against the budget.
    """
    if budget < 1:
        raise ContextError(f"budget must be >= 1, got {budget}")
    tokenizer = tokenizer or WhitespaceTokenizer()
    parts: list[str] = []
    if initial_paragraph is not None:
        if tokenizer.count(initial_paragraph) > budget:
            raise ContextError("initial paragraph alone exceeds the token budget")
        parts.append(initial_paragraph)
    ordered = sorted(fragments, key=lambda f: -f.order_key)
    included: list[ContextFragment] = []
    for fragment in ordered:
        candidate = parts + [_render(fragment)]
        if tokenizer.count(" ".join(candidate)) <= budget:
            parts.append(_render(fragment))
            included.append(fragment)
    serialized = " ".join(parts)
    return BuiltContext(
        fragments=tuple(included),
        serialized=serialized,
        token_count=tokenizer.count(serialized),
        initial_paragraph=initial_paragraph,
    )


def build_context(evidence: EvidenceSet, corpus: Corpus, tokenizer: Tokenizer | None = None,
                  budget: int = DEFAULT_BUDGET, initial_paragraph: str | None = None) -> BuiltContext:
    return serialize(recover_fragments(evidence, corpus), tokenizer, budget, initial_paragraph)


def sample_record(question: str, context: str, answer: str | None = None) -> dict:
    """One reader sample: question plus built context (plus answer when known)."""
    record = {"question": question, "context": context}
    if answer is not None:
        record["answer"] = answer
    return record


def sample_line(question: str, context: str, answer: str | None = None) -> str:
    return json.dumps(sample_record(question, context, answer),
                      sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def reader_input(question: str, context: str) -> str:
    """Render the reader's input line: question, separator, context."""
    return f"{question}{READER_SEPARATOR}{context}"


def format_options(options: Sequence[str]) -> str:
    """Multi-choice option block: ``(A) first (B) second ...``"""
    if len(options) > 26:
        raise ContextError("more than 26 options")
    return " ".join(f"({chr(ord('A') + i)}) {opt}" for i, opt in enumerate(options))
