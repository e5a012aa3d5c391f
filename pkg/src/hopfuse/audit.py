"""Train-eval overlap audit.

Scores every evaluation sample against its most similar training sample
using embedding cosine similarity averaged over the question and answer
slots, scaled to [-100, 100]. Samples whose nearest neighbor falls under
the threshold form the "least similar" subset; those that additionally
share no answer word with that neighbor form the "unmemorisable" subset.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AuditError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def cosine(a, b) -> float:
    """Cosine similarity with a zero-norm error.

    Bitwise-identical inputs short-circuit to exactly 1.0 so that planted
    duplicates score exactly 100; otherwise the value is clamped into
    [-1, 1] against float overshoot.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise AuditError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise AuditError("zero-norm embedding")
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def similarity(eval_q_vec, eval_a_vec, train_q_vec, train_a_vec) -> float:
    """Mean of question and answer cosines, scaled by 100."""
    return ((cosine(eval_q_vec, train_q_vec) + cosine(eval_a_vec, train_a_vec)) / 2.0) * 100.0


@dataclass(frozen=True)
class SamplePair:
    eval_id: str
    train_id: str
    similarity: float


@dataclass(frozen=True)
class AuditConfig:
    threshold: float = 60.0
    drop_numeric_answers: bool = False
    dedup: bool = False
    block_size: int = 512

    def __post_init__(self):
        if not -100.0 <= self.threshold <= 100.0:
            raise ValueError(f"threshold must be in [-100, 100], got {self.threshold}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass
class AuditReport:
    config: AuditConfig
    counts: dict
    nearest: list[SamplePair]
    least_similar_ids: list[str]
    unmemorisable_ids: list[str]
    dropped_duplicate_ids: list[str] = field(default_factory=list)
    dropped_numeric_ids: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "config": {
                "threshold": self.config.threshold,
                "drop_numeric_answers": self.config.drop_numeric_answers,
                "dedup": self.config.dedup,
            },
            "counts": dict(self.counts),
            "nearest": [
                {"eval_id": p.eval_id, "train_id": p.train_id, "similarity": p.similarity}
                for p in self.nearest
            ],
            "least_similar_ids": list(self.least_similar_ids),
            "unmemorisable_ids": list(self.unmemorisable_ids),
            "dropped_duplicate_ids": list(self.dropped_duplicate_ids),
            "dropped_numeric_ids": list(self.dropped_numeric_ids),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")

    def write_nearest_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eval_id", "train_id", "similarity"])
            for pair in self.nearest:
                writer.writerow([pair.eval_id, pair.train_id, repr(pair.similarity)])


def answer_tokens(text: str) -> set[str]:
    """Case-insensitive tokens split on whitespace and punctuation."""
    return set(_TOKEN_RE.findall(text.lower()))


def is_numeric_answer(answer: str) -> bool:
    """True when the answer parses entirely as a number once commas and a
    trailing period are stripped."""
    stripped = answer.strip().replace(",", "").rstrip(".")
    if not stripped:
        return False
    try:
        float(stripped)
    except ValueError:
        return False
    return True


def most_similar_train(eval_q_vec, eval_a_vec, eval_id: str, train_ids: Sequence[str],
                       train_q_vecs, train_a_vecs) -> SamplePair:
    """Exhaustive scan for the most similar training sample; ties resolve
    to the lexicographically lowest train_id."""
    if len(train_ids) == 0:
        raise AuditError("train set is empty")
    best: SamplePair | None = None
    for train_id, q_vec, a_vec in zip(train_ids, train_q_vecs, train_a_vecs):
        sim = similarity(eval_q_vec, eval_a_vec, q_vec, a_vec)
        if best is None or sim > best.similarity or (sim == best.similarity and train_id < best.train_id):
            best = SamplePair(eval_id=eval_id, train_id=train_id, similarity=sim)
    return best


def _normalized_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise AuditError(f"zero-norm embedding in {what} at row {int(zero[0])}")
    return matrix / norms[:, None]


def nearest_pairs(eval_ids: Sequence[str], eval_q: np.ndarray, eval_a: np.ndarray,
                  train_ids: Sequence[str], train_q: np.ndarray, train_a: np.ndarray,
                  block_size: int = 512) -> list[SamplePair]:
    """Blocked exact computation of each eval sample's nearest train pair.

    Train columns are processed in ascending train_id order so that the
    first argmax hit is the tie-break winner. The winning similarity is
    recomputed with the scalar path so planted duplicates report exactly
    100.
    """
    if len(train_ids) == 0:
        raise AuditError("train set is empty")
    order = sorted(range(len(train_ids)), key=lambda i: train_ids[i])
    train_ids_sorted = [train_ids[i] for i in order]
    tq = _normalized_rows(np.asarray(train_q)[order], "train questions")
    ta = _normalized_rows(np.asarray(train_a)[order], "train answers")
    eq = _normalized_rows(eval_q, "eval questions")
    ea = _normalized_rows(eval_a, "eval answers")
    pairs: list[SamplePair] = []
    for start in range(0, len(eval_ids), block_size):
        stop = min(start + block_size, len(eval_ids))
        sims = (eq[start:stop] @ tq.T + ea[start:stop] @ ta.T) * 50.0
        winners = np.argmax(sims, axis=1)
        for offset, col in enumerate(winners):
            row = start + offset
            exact = similarity(
                np.asarray(eval_q)[row], np.asarray(eval_a)[row],
                np.asarray(train_q)[order[col]], np.asarray(train_a)[order[col]],
            )
            pairs.append(SamplePair(eval_ids[row], train_ids_sorted[col], exact))
    return pairs


def _apply_filters(eval_samples: Sequence[dict], config: AuditConfig) -> tuple[list[dict], list[str], list[str]]:
    dropped_dups: list[str] = []
    dropped_numeric: list[str] = []
    kept = list(eval_samples)
    if config.dedup:
        seen: set[tuple[str, str]] = set()
        fresh = []
        for sample in kept:
            key = (sample["question"], sample["answer"])
            if key in seen:
                dropped_dups.append(sample["id"])
                continue
            seen.add(key)
            fresh.append(sample)
        kept = fresh
    if config.drop_numeric_answers:
        fresh = []
        for sample in kept:
            if is_numeric_answer(sample["answer"]):
                dropped_numeric.append(sample["id"])
            else:
                fresh.append(sample)
        kept = fresh
    return kept, dropped_dups, dropped_numeric


def extract_subsets(pairs: Sequence[SamplePair], eval_samples: Sequence[dict],
                    train_samples: Sequence[dict], config: AuditConfig | None = None) -> AuditReport:
    """Build the audit report from precomputed nearest pairs.

    Dedup and numeric-answer filters run first (when enabled); the least
    similar subset is everything whose nearest similarity is strictly
    under the threshold, and the unmemorisable subset is the part of it
    with zero answer-word overlap with the nearest training answer.
    """
    config = config or AuditConfig()
    pair_by_eval = {p.eval_id: p for p in pairs}
    train_by_id = {t["id"]: t for t in train_samples}
    kept, dropped_dups, dropped_numeric = _apply_filters(eval_samples, config)
    nearest: list[SamplePair] = []
    least_similar: list[str] = []
    unmemorisable: list[str] = []
    for sample in kept:
        pair = pair_by_eval.get(sample["id"])
        if pair is None:
            raise AuditError(f"no nearest pair supplied for eval sample {sample['id']!r}")
        nearest.append(pair)
        if pair.similarity < config.threshold:
            least_similar.append(sample["id"])
            train_answer = train_by_id[pair.train_id]["answer"]
            if not (answer_tokens(sample["answer"]) & answer_tokens(train_answer)):
                unmemorisable.append(sample["id"])
    counts = {
        "input": len(eval_samples),
        "all": len(kept),
        "least_similar": len(least_similar),
        "unmemorisable": len(unmemorisable),
    }
    return AuditReport(
        config=config,
        counts=counts,
        nearest=nearest,
        least_similar_ids=least_similar,
        unmemorisable_ids=unmemorisable,
        dropped_duplicate_ids=dropped_dups,
        dropped_numeric_ids=dropped_numeric,
    )


def audit_datasets(eval_samples: Sequence[dict], train_samples: Sequence[dict],
                   embed_texts: Callable[[Sequence[str]], np.ndarray],
                   config: AuditConfig | None = None) -> AuditReport:
    """End-to-end audit: filter, embed questions and answers, find the
    nearest training sample per eval sample, extract subsets."""
    config = config or AuditConfig()
    if not train_samples:
        raise AuditError("train set is empty")
    kept, _, _ = _apply_filters(eval_samples, config)
    if not kept:
        return extract_subsets([], eval_samples, train_samples, config)
    eval_q = embed_texts([s["question"] for s in kept])
    eval_a = embed_texts([s["answer"] for s in kept])
    train_q = embed_texts([t["question"] for t in train_samples])
    train_a = embed_texts([t["answer"] for t in train_samples])
    pairs = nearest_pairs(
        [s["id"] for s in kept], eval_q, eval_a,
        [t["id"] for t in train_samples], train_q, train_a,
        block_size=config.block_size,
    )
    return extract_subsets(pairs, eval_samples, train_samples, config)
