"""Checkpoint loading and the scoring heads behind the endpoints.

A checkpoint is a directory with a ``config.json`` declaring its kind:

* ``hash`` - a deterministic featurizer with no learned weights
  (``{"kind": "hash", "dim": 256, "seed": 0}``); useful for tests,
  demos, and wiring checks.
* ``torch`` - a HuggingFace encoder directory plus a ``heads.pt`` state
  dict with the linear score heads
  (``{"kind": "torch", "dim": 128, "encoder_dir": "encoder",
  "weights": "heads.pt", "max_length": 512}``). Score heads read the
  [CLS] position; per-sentence heads read the [SM] marker positions.
  All score outputs pass through a sigmoid, so they live in [0, 1].

Declared output dimensions are validated against a probe input at load
time. Inference on a torch head is serialized by a lock; hash heads are
pure functions and need none.
"""

from __future__ import annotations

import hashlib
import json
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Sequence

import numpy as np

from . import serialization as ser


class CheckpointError(Exception):
    """Checkpoint missing, malformed, or inconsistent with its declaration."""


class EncoderHead(ABC):
    dim: int

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class RerankHead(ABC):
    @abstractmethod
    def score(self, query: str, title: str, sentences: Sequence[str]) -> tuple[float, list[float]]: ...


class EvidenceHead(ABC):
    @abstractmethod
    def score(self, question: str, sentences: Sequence[tuple[str, str]]) -> tuple[float, list[float]]: ...


class RRHead(ABC):
    @abstractmethod
    def score(self, question: str, context: str) -> float: ...


def _unit(seed: int, *parts: str) -> float:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest(), "little") / 2.0**64


class HashEncoderHead(EncoderHead):
    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in text.lower().split():
                h = hashlib.blake2b(digest_size=8)
                h.update(str(self.seed).encode("utf-8"))
                h.update(b"\x1ftok\x1f")
                h.update(token.encode("utf-8"))
                value = int.from_bytes(h.digest(), "little")
                sign = 1.0 if (value >> 32) & 1 else -1.0
                out[row, value % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class HashRerankHead(RerankHead):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, query, title, sentences):
        serialized = ser.rerank_text(query, title, sentences)
        p = _unit(self.seed, "rerank-p", serialized)
        s = [_unit(self.seed, "rerank-s", serialized, str(i)) for i in range(len(sentences))]
        return p, s


class HashEvidenceHead(EvidenceHead):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question, sentences):
        serialized = ser.evidence_text(question, sentences)
        e = _unit(self.seed, "evidence-e", serialized)
        s = [_unit(self.seed, "evidence-s", serialized, str(i)) for i in range(len(sentences))]
        return e, s


class HashRRHead(RRHead):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question, context):
        return _unit(self.seed, "rr", ser.rr_text(question, context))


class _TorchBackbone:
    """Shared encoder + tokenizer for the torch heads of one checkpoint."""

    def __init__(self, encoder_dir: Path, device: str, max_length: int):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(str(encoder_dir))
        added = self.tokenizer.add_special_tokens(
            {"additional_special_tokens": [ser.QSEP, ser.SM, ser.INSUFF]}
        )
        self.model = AutoModel.from_pretrained(str(encoder_dir))
        if added:
            # foreign checkpoints without the marker tokens get seeded
            # extra embedding rows so loading stays deterministic
            torch.manual_seed(0)
            self.model.resize_token_embeddings(len(self.tokenizer))
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.max_length = max_length
        self.hidden = int(self.model.config.hidden_size)
        self.sm_id = self.tokenizer.convert_tokens_to_ids(ser.SM)
        self.lock = threading.Lock()

    def hidden_states(self, texts: Sequence[str]):
        enc = self.tokenizer(list(texts), padding=True, truncation=True,
                             max_length=self.max_length, return_tensors="pt").to(self.device)
        with self.lock, self.torch.no_grad():
            out = self.model(**enc).last_hidden_state
        return enc, out


def _linear(weights: dict, name: str, hidden: int):
    import torch

    w = weights.get(f"{name}.weight")
    b = weights.get(f"{name}.bias")
    if w is None or b is None:
        raise CheckpointError(f"weights file missing {name}.weight/.bias")
    layer = torch.nn.Linear(hidden, w.shape[0])
    with torch.no_grad():
        layer.weight.copy_(w)
        layer.bias.copy_(b)
    layer.eval()
    return layer


class TorchEncoderHead(EncoderHead):
    """Mean-pooled transformer embeddings with an optional projection."""

    def __init__(self, backbone: _TorchBackbone, weights: dict, dim: int, max_batch: int):
        self.backbone = backbone
        self.max_batch = max_batch
        torch = backbone.torch
        if "proj.weight" in weights:
            self.proj = _linear(weights, "proj", backbone.hidden)
            self.dim = int(self.proj.weight.shape[0])
        else:
            self.proj = None
            self.dim = backbone.hidden
        if self.dim != dim:
            raise CheckpointError(f"declared dim {dim} but checkpoint produces {self.dim}")
        self._torch = torch

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for start in range(0, len(texts), self.max_batch):
            batch = texts[start:start + self.max_batch]
            enc, hidden = self.backbone.hidden_states(batch)
            mask = enc["attention_mask"].unsqueeze(-1)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
            if self.proj is not None:
                with self._torch.no_grad():
                    pooled = self.proj(pooled)
            rows.append(pooled.cpu().numpy())
        return np.concatenate(rows, axis=0) if rows else np.empty((0, self.dim))


class _TorchMarkerScorer:
    """[CLS] -> set-level score, [SM] positions -> per-item scores."""

    def __init__(self, backbone: _TorchBackbone, weights: dict):
        self.backbone = backbone
        self.score_head = _linear(weights, "score_head", backbone.hidden)
        self.marker_head = _linear(weights, "marker_head", backbone.hidden)

    def score(self, text: str, expected_markers: int) -> tuple[float, list[float]]:
        torch = self.backbone.torch
        enc, hidden = self.backbone.hidden_states([text])
        with torch.no_grad():
            top = torch.sigmoid(self.score_head(hidden[0, 0])).item()
            positions = (enc["input_ids"][0] == self.backbone.sm_id).nonzero().flatten()
            marks = torch.sigmoid(self.marker_head(hidden[0, positions])).flatten().tolist()
        if len(marks) < expected_markers:
            # markers truncated away by max_length fall back to the set score
            marks = marks + [top] * (expected_markers - len(marks))
        return float(top), [float(m) for m in marks[:expected_markers]]


class TorchRerankHead(RerankHead):
    def __init__(self, backbone: _TorchBackbone, weights: dict):
        self._scorer = _TorchMarkerScorer(backbone, weights)

    def score(self, query, title, sentences):
        return self._scorer.score(ser.rerank_text(query, title, sentences), len(sentences))


class TorchEvidenceHead(EvidenceHead):
    def __init__(self, backbone: _TorchBackbone, weights: dict):
        self._scorer = _TorchMarkerScorer(backbone, weights)

    def score(self, question, sentences):
        return self._scorer.score(ser.evidence_text(question, sentences), len(sentences))


class TorchRRHead(RRHead):
    def __init__(self, backbone: _TorchBackbone, weights: dict):
        self.backbone = backbone
        self.score_head = _linear(weights, "score_head", backbone.hidden)

    def score(self, question, context):
        torch = self.backbone.torch
        _, hidden = self.backbone.hidden_states([ser.rr_text(question, context)])
        with torch.no_grad():
            return float(torch.sigmoid(self.score_head(hidden[0, 0])).item())


def _read_config(path: Path) -> dict:
    config_file = path / "config.json"
    if not config_file.exists():
        raise CheckpointError(f"no config.json under {path}")
    try:
        return json.loads(config_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt config.json under {path}: {exc}") from exc


_BACKBONES: dict[tuple[str, str], _TorchBackbone] = {}


def _torch_parts(path: Path, cfg: dict, device: str):
    import torch

    encoder_dir = (path / cfg.get("encoder_dir", "encoder")).resolve()
    key = (str(encoder_dir), device)
    if key not in _BACKBONES:
        _BACKBONES[key] = _TorchBackbone(encoder_dir, device, int(cfg.get("max_length", 512)))
    weights_file = path / cfg.get("weights", "heads.pt")
    weights = torch.load(str(weights_file), map_location=device) if weights_file.exists() else {}
    return _BACKBONES[key], weights


def load_encoder_head(path: str, device: str = "cpu", max_batch: int = 16) -> EncoderHead:
    p = Path(path)
    cfg = _read_config(p)
    if cfg.get("kind") == "hash":
        head = HashEncoderHead(dim=int(cfg["dim"]), seed=int(cfg.get("seed", 0)))
    elif cfg.get("kind") == "torch":
        backbone, weights = _torch_parts(p, cfg, device)
        head = TorchEncoderHead(backbone, weights, int(cfg["dim"]), max_batch)
    else:
        raise CheckpointError(f"unknown checkpoint kind {cfg.get('kind')!r} under {path}")
    probe = head.embed(["dimension probe"])
    if probe.shape != (1, int(cfg["dim"])):
        raise CheckpointError(
            f"checkpoint under {path} produced shape {probe.shape}, declared dim {cfg['dim']}"
        )
    return head


def _load_scorer(path: str, device: str, torch_cls, hash_cls):
    p = Path(path)
    cfg = _read_config(p)
    if cfg.get("kind") == "hash":
        return hash_cls(seed=int(cfg.get("seed", 0)))
    if cfg.get("kind") == "torch":
        backbone, weights = _torch_parts(p, cfg, device)
        return torch_cls(backbone, weights)
    raise CheckpointError(f"unknown checkpoint kind {cfg.get('kind')!r} under {path}")


def load_rerank_head(path: str, device: str = "cpu") -> RerankHead:
    return _load_scorer(path, device, TorchRerankHead, HashRerankHead)


def load_evidence_head(path: str, device: str = "cpu") -> EvidenceHead:
    return _load_scorer(path, device, TorchEvidenceHead, HashEvidenceHead)


def load_rr_head(path: str, device: str = "cpu") -> RRHead:
    return _load_scorer(path, device, TorchRRHead, HashRRHead)


def checkpoint_digest(path: str) -> str:
    """sha256 over every file in the checkpoint directory, stable order."""
    digest = hashlib.sha256()
    base = Path(path)
    for file in sorted(p for p in base.rglob("*") if p.is_file()):
        digest.update(str(file.relative_to(base)).encode("utf-8"))
        digest.update(file.read_bytes())
    return digest.hexdigest()
