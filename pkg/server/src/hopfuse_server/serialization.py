"""Canonical input serializations for each scoring head.

Every head consumes a single flat string built from the request. The
marker tokens ([QSEP], [SM], [INSUFF]) are literal text here; the torch
heads register them as tokenizer special tokens, the hash heads simply
hash the serialized string.
"""

from __future__ import annotations

from typing import Sequence

QSEP = "[QSEP]"
SEP = "[SEP]"
SM = "[SM]"
INSUFF = "[INSUFF]"


def chain_paragraph_text(title: str, sentences: Sequence[str]) -> str:
    return f"{title} | {' '.join(sentences)}"


def query_text(question: str, chain: Sequence[tuple[str, Sequence[str]]]) -> str:
    """``question [QSEP] title 1 | sentence 1. sentence 2. [QSEP] ...``"""
    parts = [question]
    for title, sentences in chain:
        parts.append(f"{QSEP} {chain_paragraph_text(title, sentences)}")
    return " ".join(parts)


def doc_text(title: str, text: str) -> str:
    return f"{title} | {text}" if title else text


def rerank_text(query: str, title: str, sentences: Sequence[str]) -> str:
    """``query [SEP] yes no [INSUFF] [SEP] title [SM] s0 [SM] s1 ... [SEP]``"""
    marked = " ".join(f"{SM} {s}" for s in sentences)
    return f"{query} {SEP} yes no {INSUFF} {SEP} {title} {marked} {SEP}"


def evidence_text(question: str, sentences: Sequence[tuple[str, str]]) -> str:
    """``question [SEP] yes no [INSUFF] [SEP] [SM] title | sentence ... [SEP]``"""
    marked = " ".join(f"{SM} {title} | {text}" for title, text in sentences)
    return f"{question} {SEP} yes no {INSUFF} {SEP} {marked} {SEP}"


def rr_text(question: str, context: str) -> str:
    return f"{question} {SEP} {context}"
