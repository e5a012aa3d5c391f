"""Pipeline configuration (TOML or JSON) and run manifests.

Every command records a manifest with the hash of its effective
configuration and of each input file, so identical inputs are verifiably
identical runs. Manifests contain no timestamps; with deterministic
backends a repeated run is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .audit import AuditConfig
from .backends import BackendSuite, mock_suite, remote_suite
from .errors import ConfigError
from .evidence import EvidenceConfig
from .fusion import FusionConfig
from .hops import IteratorConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

ENV_BACKEND_URL = "HOPFUSE_BACKEND_URL"


@dataclass
class BackendConfig:
    kind: str = "mock"  # "mock" | "remote"
    dim: int = 256
    seed: int = 0
    url: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 8

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ConfigError(f"backend kind must be 'mock' or 'remote', got {self.kind!r}")
        if self.dim < 1:
            raise ConfigError(f"backend dim must be >= 1, got {self.dim}")

    def resolved_url(self) -> str:
        url = os.environ.get(ENV_BACKEND_URL) or self.url
        if not url:
            raise ConfigError("remote backend selected but no endpoint URL configured "
                              f"(set backends.url or {ENV_BACKEND_URL})")
        return url

    def make_suite(self) -> BackendSuite:
        if self.kind == "mock":
            return mock_suite(dim=self.dim, seed=self.seed)
        return remote_suite(
            self.resolved_url(),
            dim=self.dim,
            timeout=self.timeout,
            max_retries=self.max_retries,
            max_in_flight=self.max_in_flight,
        )


@dataclass
class PipelineConfig:
    corpus_path: str | None = None
    index_path: str | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    iterator: IteratorConfig = field(default_factory=IteratorConfig)
    budget: int = 512
    audit: AuditConfig = field(default_factory=AuditConfig)

    def as_dict(self) -> dict:
        return {
            "corpus": {"path": self.corpus_path},
            "index": {"path": self.index_path},
            "backends": {
                "kind": self.backend.kind,
                "dim": self.backend.dim,
                "seed": self.backend.seed,
                "url": self.backend.url,
                "timeout": self.backend.timeout,
                "max_retries": self.backend.max_retries,
                "max_in_flight": self.backend.max_in_flight,
            },
            "iterator": {
                "t_max": self.iterator.t_max,
                "k": self.iterator.k,
                "dedup_across_hops": self.iterator.dedup_across_hops,
                "early_exit_score": self.iterator.early_exit_score,
            },
            "fusion": {"w": self.iterator.fusion.w},
            "evidence": {
                "max_sentences": self.iterator.evidence.max_sentences,
                "select_max": self.iterator.evidence.select_max,
                "select_threshold": self.iterator.evidence.select_threshold,
                "select_min": self.iterator.evidence.select_min,
            },
            "context": {"budget": self.budget},
            "audit": {
                "threshold": self.audit.threshold,
                "drop_numeric_answers": self.audit.drop_numeric_answers,
                "dedup": self.audit.dedup,
            },
        }


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a table/object")
    return value


def load_config(path: str | None = None) -> PipelineConfig:
    """Read a TOML (.toml) or JSON config file; missing keys default."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            if p.suffix == ".toml":
                raw = tomllib.loads(p.read_text(encoding="utf-8"))
            else:
                raw = json.loads(p.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"could not parse config file {path}: {exc}") from exc
    try:
        backend = BackendConfig(**_section(raw, "backends"))
        fusion = FusionConfig(**_section(raw, "fusion"))
        evidence = EvidenceConfig(**_section(raw, "evidence"))
        iterator_raw = _section(raw, "iterator")
        iterator = IteratorConfig(fusion=fusion, evidence=evidence, **iterator_raw)
        audit_cfg = AuditConfig(**_section(raw, "audit"))
        context_raw = _section(raw, "context")
        budget = context_raw.get("budget", 512)
        if not isinstance(budget, int) or budget < 1:
            raise ConfigError(f"context.budget must be a positive integer, got {budget!r}")
        return PipelineConfig(
            corpus_path=_section(raw, "corpus").get("path"),
            index_path=_section(raw, "index").get("path"),
            backend=backend,
            iterator=iterator,
            budget=budget,
            audit=audit_cfg,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(command: str, config: PipelineConfig, inputs: dict[str, str],
                   outputs: dict[str, str], manifest_path: str | None = None) -> str:
    """Write the run manifest next to the first output (or to an explicit
    path) and return its location."""
    from . import __version__

    cfg = config.as_dict()
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "inputs": {name: {"path": str(p), "sha256": file_sha256(p)} for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": file_sha256(p)} for name, p in outputs.items()},
    }
    if manifest_path is None:
        first = next(iter(outputs.values()))
        manifest_path = f"{first}.manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest_path
