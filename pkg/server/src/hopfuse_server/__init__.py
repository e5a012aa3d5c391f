"""hopfuse-server: sidecar scoring service for the retrieval pipeline."""

__version__ = "0.1.0"

from .app import ServeConfig, create_app
from .heads import (
    CheckpointError,
    load_encoder_head,
    load_evidence_head,
    load_rerank_head,
    load_rr_head,
)

__all__ = [
    "CheckpointError",
    "ServeConfig",
    "create_app",
    "load_encoder_head",
    "load_evidence_head",
    "load_rerank_head",
    "load_rr_head",
]
