"""Paragraph corpus: ingestion, validation, sentence offsets, persistence.

The retrieval unit is a titled paragraph with pre-computed sentence
offsets. Ingestion drops paragraphs of seven or fewer whitespace words
and computes sentence spans for records that do not supply them.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .errors import CorpusLookupError, FormatError, IngestError, RecordError

_TERMINALS = ".!?"
_MIN_SENTENCE_CHARS = 2

SentenceSplitter = Callable[[str], "list[tuple[int, int]]"]


def default_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Compute half-open sentence spans over ``text``.

    Splits after ``.``, ``!`` or ``?`` when followed by whitespace and an
    uppercase letter or digit, and only when the sentence produced so far
    is at least two characters long. Spans are trimmed of surrounding
    whitespace, so everything between consecutive spans is whitespace.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    while start < n and text[start].isspace():
        start += 1
    if start == n:
        return spans
    i = start
    while i < n:
        ch = text[i]
        if ch in _TERMINALS and i + 1 - start >= _MIN_SENTENCE_CHARS:
            j = i + 1
            saw_ws = False
            while j < n and text[j].isspace():
                saw_ws = True
                j += 1
            if saw_ws and j < n and (text[j].isupper() or text[j].isdigit()):
                spans.append((start, i + 1))
                start = j
                i = j
                continue
        i += 1
    end = n
    while end > start and text[end - 1].isspace():
        end -= 1
    if end > start:
        spans.append((start, end))
    return spans


def validate_spans(text: str, spans: Sequence[tuple[int, int]]) -> None:
    """Check spans are ordered, non-overlapping, in-bounds, and jointly
    cover every non-whitespace character of ``text``."""
    prev_end = 0
    for k, (s, e) in enumerate(spans):
        if not (0 <= s < e <= len(text)):
            raise ValueError(f"span {k} ({s},{e}) out of bounds for text of length {len(text)}")
        if s < prev_end:
            raise ValueError(f"span {k} ({s},{e}) overlaps or precedes the previous span")
        if not text[prev_end:s].isspace() and prev_end != s:
            raise ValueError(f"non-whitespace text uncovered before span {k}")
        prev_end = e
    if text[prev_end:].strip():
        raise ValueError("non-whitespace text after the final span")


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Paragraph:
    """A titled paragraph with sentence offsets; immutable once built."""

    doc_id: str
    title: str
    text: str
    sentence_spans: tuple[tuple[int, int], ...]
    hyperlinks: tuple[str, ...] = ()

    def __post_init__(self):
        if word_count(self.text) <= 7:
            raise ValueError(f"paragraph {self.doc_id!r} has <=7 words")
        try:
            validate_spans(self.text, self.sentence_spans)
        except ValueError as exc:
            raise ValueError(f"paragraph {self.doc_id!r}: {exc}") from exc
        if not self.sentence_spans:
            raise ValueError(f"paragraph {self.doc_id!r} has no sentences")

    @property
    def sentence_count(self) -> int:
        return len(self.sentence_spans)

    def sentence(self, sent_idx: int) -> str:
        if not 0 <= sent_idx < len(self.sentence_spans):
            raise CorpusLookupError(
                f"sentence index {sent_idx} out of range for {self.doc_id!r} "
                f"({len(self.sentence_spans)} sentences)"
            )
        s, e = self.sentence_spans[sent_idx]
        return self.text[s:e]

    def sentences(self) -> list[str]:
        return [self.text[s:e] for s, e in self.sentence_spans]


class Corpus:
    """Immutable collection of paragraphs with O(1) id lookup."""

    def __init__(self, paragraphs: Sequence[Paragraph]):
        self._paragraphs = tuple(paragraphs)
        self._by_id: dict[str, int] = {}
        for pos, para in enumerate(self._paragraphs):
            if para.doc_id in self._by_id:
                raise IngestError(f"duplicate doc_id {para.doc_id!r}")
            self._by_id[para.doc_id] = pos

    def __len__(self) -> int:
        return len(self._paragraphs)

    def __iter__(self) -> Iterator[Paragraph]:
        return iter(self._paragraphs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Paragraph:
        pos = self._by_id.get(doc_id)
        if pos is None:
            raise CorpusLookupError(f"unknown doc_id {doc_id!r}")
        return self._paragraphs[pos]

    def doc_ids(self) -> list[str]:
        return [p.doc_id for p in self._paragraphs]


def get_sentence(corpus: Corpus, doc_id: str, sent_idx: int) -> str:
    """Exact substring of the stored paragraph for the given sentence span."""
    return corpus.get(doc_id).sentence(sent_idx)


@dataclass
class IngestRules:
    """Ingestion policy.

    A paragraph is retained only when its whitespace word count is
    strictly greater than ``min_words_exclusive`` (default: drop anything
    with seven or fewer words). ``on_error`` selects whether malformed
    records abort the run or are skipped and counted.
    """

    min_words_exclusive: int = 7
    on_error: str = "abort"  # "abort" | "skip"
    splitter: SentenceSplitter = field(default=default_sentence_spans, repr=False)

    def __post_init__(self):
        if self.on_error not in ("abort", "skip"):
            raise ValueError(f"on_error must be 'abort' or 'skip', got {self.on_error!r}")


@dataclass
class IngestStats:
    read: int = 0
    retained: int = 0
    dropped_short: int = 0
    skipped_malformed: int = 0

    def as_dict(self) -> dict:
        return {
            "read": self.read,
            "retained": self.retained,
            "dropped_short": self.dropped_short,
            "skipped_malformed": self.skipped_malformed,
        }


def _paragraph_from_record(record: dict, line_no: int, rules: IngestRules) -> Paragraph | None:
    """Build a Paragraph from one JSON record, or None when filtered out."""
    if not isinstance(record, dict):
        raise RecordError(line_no, "record is not an object")
    for key in ("doc_id", "title", "text"):
        if key not in record:
            raise RecordError(line_no, f"missing field {key!r}")
        if not isinstance(record[key], str):
            raise RecordError(line_no, f"field {key!r} is not a string")
    text = record["text"]
    if word_count(text) <= rules.min_words_exclusive:
        return None
    raw_spans = record.get("sentence_spans")
    if raw_spans is None:
        spans = tuple(rules.splitter(text))
    else:
        try:
            spans = tuple((int(s), int(e)) for s, e in raw_spans)
        except (TypeError, ValueError) as exc:
            raise RecordError(line_no, f"bad sentence_spans: {exc}") from exc
    hyperlinks = record.get("hyperlinks") or ()
    if not all(isinstance(h, str) for h in hyperlinks):
        raise RecordError(line_no, "hyperlinks must be strings")
    try:
        return Paragraph(
            doc_id=record["doc_id"],
            title=record["title"],
            text=text,
            sentence_spans=spans,
            hyperlinks=tuple(hyperlinks),
        )
    except ValueError as exc:
        raise RecordError(line_no, str(exc)) from exc


def ingest(source: Iterable[str | dict], rules: IngestRules | None = None) -> tuple[Corpus, IngestStats]:
    """Build a Corpus from a stream of JSON lines or pre-parsed records.

    Paragraphs failing the word-count rule are dropped and counted.
    Malformed records either abort the whole ingest or are skipped,
    per ``rules.on_error``. An empty corpus after filtering is a hard error.
    """
    rules = rules or IngestRules()
    stats = IngestStats()
    paragraphs: list[Paragraph] = []
    seen: set[str] = set()
    for line_no, item in enumerate(source, start=1):
        stats.read += 1
        try:
            if isinstance(item, str):
                if not item.strip():
                    stats.read -= 1
                    continue
                try:
                    record = json.loads(item)
                except json.JSONDecodeError as exc:
                    raise RecordError(line_no, f"invalid JSON: {exc}") from exc
            else:
                record = item
            para = _paragraph_from_record(record, line_no, rules)
            if para is None:
                stats.dropped_short += 1
                continue
            if para.doc_id in seen:
                raise RecordError(line_no, f"duplicate doc_id {para.doc_id!r}")
        except RecordError:
            if rules.on_error == "abort":
                raise
            stats.skipped_malformed += 1
            continue
        seen.add(para.doc_id)
        paragraphs.append(para)
        stats.retained += 1
    if not paragraphs:
        raise IngestError("no paragraphs retained after filtering")
    return Corpus(paragraphs), stats


def ingest_path(path, rules: IngestRules | None = None) -> tuple[Corpus, IngestStats]:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest(fh, rules)


# Persistence: 8-byte magic, u32 header length, JSON header, then one
# length-prefixed JSON record per paragraph. Little-endian throughout.
_MAGIC = b"HOPFCORP"
_VERSION = 1


def _record_bytes(para: Paragraph) -> bytes:
    record = {
        "doc_id": para.doc_id,
        "title": para.title,
        "text": para.text,
        "sentence_spans": [list(s) for s in para.sentence_spans],
        "hyperlinks": list(para.hyperlinks),
    }
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def save(corpus: Corpus, path) -> None:
    """Persist the corpus; byte-identical for identical corpora."""
    header = json.dumps(
        {"version": _VERSION, "count": len(corpus)},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for para in corpus:
            blob = _record_bytes(para)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)


def _read_exact(fh: io.BufferedReader, n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise FormatError(f"truncated corpus file while reading {what}")
    return blob


def load(path) -> Corpus:
    """Load a persisted corpus; raises FormatError rather than returning
    a partial corpus when the file is corrupt or truncated."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise FormatError("not a corpus file (bad magic)")
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"corrupt corpus header: {exc}") from exc
        if header.get("version") != _VERSION:
            raise FormatError(f"corpus format version mismatch: {header.get('version')!r}")
        count = header.get("count")
        if not isinstance(count, int) or count < 0:
            raise FormatError("corrupt corpus header: bad count")
        if count == 0:
            raise FormatError("corpus file contains no paragraphs")
        paragraphs: list[Paragraph] = []
        for k in range(count):
            (rec_len,) = struct.unpack("<I", _read_exact(fh, 4, f"record {k} length"))
            try:
                record = json.loads(_read_exact(fh, rec_len, f"record {k}"))
                paragraphs.append(
                    Paragraph(
                        doc_id=record["doc_id"],
                        title=record["title"],
                        text=record["text"],
                        sentence_spans=tuple(tuple(s) for s in record["sentence_spans"]),
                        hyperlinks=tuple(record.get("hyperlinks", ())),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"corrupt corpus record {k}: {exc}") from exc
        if fh.read(1):
            raise FormatError("trailing bytes after final corpus record")
    return Corpus(paragraphs)
