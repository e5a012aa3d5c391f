"""Exact maximum-inner-product search over document vectors.

The ranking score is the raw inner product (no normalization); ranking
candidates by softmax of inner products gives the next-document
probability distribution. An approximate graph-based search is provided
behind the same interface for large corpora; the exact scan remains the
contract and the default.
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, IndexError_


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float


def _as_query(vec, dim: int) -> np.ndarray:
    q = np.asarray(vec, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != dim:
        raise IndexError_(f"query dimension {q.shape} does not match index dim {dim}")
    if not np.all(np.isfinite(q)):
        raise IndexError_("query vector contains non-finite entries")
    return q


class DenseIndex:
    """Immutable doc-ordered matrix of embedding vectors with exact search."""

    def __init__(self, doc_ids: Sequence[str], matrix: np.ndarray):
        if matrix.ndim != 2:
            raise IndexError_("matrix must be 2-D")
        if len(doc_ids) != matrix.shape[0]:
            raise IndexError_("doc_ids and matrix row count differ")
        self.doc_ids: tuple[str, ...] = tuple(doc_ids)
        self._row: dict[str, int] = {}
        for pos, doc_id in enumerate(self.doc_ids):
            if doc_id in self._row:
                raise IndexError_(f"duplicate doc_id {doc_id!r}")
            self._row[doc_id] = pos
        if not np.all(np.isfinite(matrix)):
            raise IndexError_("index vectors contain non-finite entries")
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        # rank of each row's doc_id in ascending lexicographic order, for tie-breaks
        order = sorted(range(len(self.doc_ids)), key=lambda i: self.doc_ids[i])
        self._id_rank = np.empty(len(order), dtype=np.int64)
        for rank, row in enumerate(order):
            self._id_rank[row] = rank

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row

    def vector(self, doc_id: str) -> np.ndarray:
        row = self._row.get(doc_id)
        if row is None:
            raise IndexError_(f"unknown doc_id {doc_id!r}")
        return self.matrix[row]

    def search(self, query, k: int, exclude: set[str] | frozenset[str] = frozenset()) -> list[SearchHit]:
        """Top-``min(k, eligible)`` hits by exact inner product.

        Scores are computed in float64; ties are broken by ascending
        doc_id so results are deterministic across runs and worker counts.
        """
        if k < 1:
            raise IndexError_(f"k must be >= 1, got {k}")
        q = _as_query(query, self.dim)
        scores = self.matrix @ q
        order = np.lexsort((self._id_rank, -scores))
        hits: list[SearchHit] = []
        for row in order:
            doc_id = self.doc_ids[row]
            if doc_id in exclude:
                continue
            hits.append(SearchHit(doc_id, float(scores[row])))
            if len(hits) == k:
                break
        return hits

    def next_doc_probabilities(self, query, candidate_ids: Sequence[str]) -> list[float]:
        """Softmax of inner products over the candidate set.

        Computed with max-subtraction for numerical stability; the result
        sums to 1 within 1e-9 and is equivariant in candidate order.
        """
        if not candidate_ids:
            raise IndexError_("candidate set is empty")
        q = _as_query(query, self.dim)
        rows = []
        for doc_id in candidate_ids:
            row = self._row.get(doc_id)
            if row is None:
                raise IndexError_(f"unknown candidate {doc_id!r}")
            rows.append(row)
        dots = (self.matrix[rows].astype(np.float64) @ q)
        shifted = dots - dots.max()
        weights = np.exp(shifted)
        probs = weights / weights.sum()
        return [float(p) for p in probs]

    def save(self, path) -> None:
        save_vectors(path, self.doc_ids, self.matrix)

    @classmethod
    def load(cls, path) -> "DenseIndex":
        ids, matrix = load_vectors(path)
        return cls(ids, matrix)


def build(pairs: Iterable[tuple[str, Sequence[float]]], dim: int) -> DenseIndex:
    """Build an index from (doc_id, vector) pairs, validating dimensions
    and id uniqueness."""
    if dim < 1:
        raise IndexError_(f"dim must be >= 1, got {dim}")
    ids: list[str] = []
    rows: list[np.ndarray] = []
    for doc_id, vec in pairs:
        arr = np.asarray(vec, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] != dim:
            raise IndexError_(f"vector for {doc_id!r} has shape {arr.shape}, expected ({dim},)")
        ids.append(doc_id)
        rows.append(arr)
    matrix = np.vstack(rows) if rows else np.empty((0, dim), dtype=np.float32)
    return DenseIndex(ids, matrix)


# Vector file: magic, u32 version, u32 dim, u64 count, then per record a
# u32-length-prefixed utf-8 id followed by dim little-endian float32s.
_MAGIC = b"HOPFVEC\x01"
_VERSION = 1


def save_vectors(path, doc_ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQ", _VERSION, matrix.shape[1], matrix.shape[0]))
        for doc_id, row in zip(doc_ids, matrix):
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(row.astype("<f4").tobytes())


def load_vectors(path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise FormatError("not a vector file (bad magic)")
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError("truncated vector file header")
        version, dim, count = struct.unpack("<IIQ", header)
        if version != _VERSION:
            raise FormatError(f"vector file version mismatch: {version}")
        ids: list[str] = []
        matrix = np.empty((count, dim), dtype=np.float32)
        row_bytes = dim * 4
        for i in range(count):
            len_blob = fh.read(4)
            if len(len_blob) != 4:
                raise FormatError(f"truncated vector file at record {i}")
            (id_len,) = struct.unpack("<I", len_blob)
            id_blob = fh.read(id_len)
            vec_blob = fh.read(row_bytes)
            if len(id_blob) != id_len or len(vec_blob) != row_bytes:
                raise FormatError(f"truncated vector file at record {i}")
            ids.append(id_blob.decode("utf-8"))
            matrix[i] = np.frombuffer(vec_blob, dtype="<f4")
        if fh.read(1):
            raise FormatError("trailing bytes after final vector record")
    return ids, matrix


@dataclass
class HnswParams:
    m: int = 12
    ef_construction: int = 100
    ef_search: int = 96
    seed: int = 0


class HnswIndex:
    """Approximate inner-product search over a navigable small-world graph.

    Same search interface as DenseIndex but without the exactness
    guarantee; quality is checked as recall against the exact scan.
    Construction is seeded and fully deterministic.
    """

    def __init__(self, doc_ids: Sequence[str], matrix: np.ndarray, params: HnswParams | None = None):
        base = DenseIndex(doc_ids, matrix)  # reuse validation
        self.doc_ids = base.doc_ids
        self.matrix = base.matrix.astype(np.float64)
        self._row = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}
        self.params = params or HnswParams()
        self._levels: list[int] = []
        self._links: list[list[list[int]]] = []  # node -> level -> neighbor rows
        self._entry: int | None = None
        self._build()

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def _build(self) -> None:
        rng = np.random.default_rng(self.params.seed)
        ml = 1.0 / math.log(self.params.m)
        for node in range(len(self.matrix)):
            level = int(-math.log(max(rng.random(), 1e-12)) * ml)
            self._levels.append(level)
            self._links.append([[] for _ in range(level + 1)])
            self._insert(node, level)

    def _dots(self, rows: list[int], q: np.ndarray) -> np.ndarray:
        return self.matrix[rows] @ q

    def _greedy(self, q: np.ndarray, start: int, level: int) -> int:
        cur = start
        cur_score = float(self.matrix[cur] @ q)
        improved = True
        while improved:
            improved = False
            neigh = self._links[cur][level]
            if not neigh:
                break
            scores = self._dots(neigh, q)
            best = int(np.argmax(scores))
            if scores[best] > cur_score:
                cur = neigh[best]
                cur_score = float(scores[best])
                improved = True
        return cur

    def _search_layer(self, q: np.ndarray, entries: list[int], ef: int, level: int) -> list[tuple[float, int]]:
        visited = set(entries)
        cand: list[tuple[float, int]] = []  # max-heap via negated score
        best: list[tuple[float, int]] = []  # min-heap of up to ef best
        for e in entries:
            score = float(self.matrix[e] @ q)
            heapq.heappush(cand, (-score, e))
            heapq.heappush(best, (score, e))
        while cand:
            neg_score, node = heapq.heappop(cand)
            if len(best) >= ef and -neg_score < best[0][0]:
                break
            fresh = [n for n in self._links[node][level] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            scores = self._dots(fresh, q)
            for n, score in zip(fresh, scores):
                score = float(score)
                if len(best) < ef or score > best[0][0]:
                    heapq.heappush(cand, (-score, n))
                    heapq.heappush(best, (score, n))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted(best, key=lambda t: (-t[0], t[1]))

    def _insert(self, node: int, level: int) -> None:
        if self._entry is None:
            self._entry = node
            return
        q = self.matrix[node]
        cur = self._entry
        top = self._levels[self._entry]
        for lev in range(top, level, -1):
            cur = self._greedy(q, cur, lev)
        for lev in range(min(level, top), -1, -1):
            found = self._search_layer(q, [cur], self.params.ef_construction, lev)
            neighbors = [n for _, n in found[: self.params.m]]
            self._links[node][lev] = list(neighbors)
            cap = self.params.m * 2 if lev == 0 else self.params.m
            for n in neighbors:
                links = self._links[n][lev]
                links.append(node)
                if len(links) > cap:
                    scores = self._dots(links, self.matrix[n])
                    order = sorted(range(len(links)), key=lambda i: (-scores[i], links[i]))
                    self._links[n][lev] = [links[i] for i in order[:cap]]
            if found:
                cur = found[0][1]
        if level > top:
            self._entry = node

    def search(self, query, k: int, exclude: set[str] | frozenset[str] = frozenset()) -> list[SearchHit]:
        if k < 1:
            raise IndexError_(f"k must be >= 1, got {k}")
        if self._entry is None:
            return []
        q = _as_query(query, self.dim)
        excluded_rows = {self._row[d] for d in exclude if d in self._row}
        cur = self._entry
        for lev in range(self._levels[self._entry], 0, -1):
            cur = self._greedy(q, cur, lev)
        ef = max(self.params.ef_search, k) + len(excluded_rows)
        found = self._search_layer(q, [cur], ef, 0)
        hits = [
            (score, self.doc_ids[node])
            for score, node in found
            if node not in excluded_rows
        ]
        hits.sort(key=lambda t: (-t[0], t[1]))
        return [SearchHit(doc_id, score) for score, doc_id in hits[:k]]


def build_manifest_entry(path) -> dict:
    """Summary header info for run manifests (no vector payload)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        version, dim, count = struct.unpack("<IIQ", fh.read(16))
    return {"magic": magic.hex(), "version": version, "dim": dim, "count": count}


def dump_hits(hits: list[SearchHit]) -> str:
    return json.dumps([{"doc_id": h.doc_id, "score": h.score} for h in hits], separators=(",", ":"))
