"""hopfuse: multi-hop dense retrieval, evidence selection, context
fusion, and train-eval overlap auditing at desk scale."""

__version__ = "0.1.0"

from .audit import AuditConfig, AuditReport, SamplePair, audit_datasets, similarity
from .backends import (
    BackendSuite,
    EncoderBackend,
    EvidenceBackend,
    MockHashEncoder,
    PlantedChainEncoder,
    RerankBackend,
    RRBackend,
    mock_suite,
    remote_suite,
)
from .combine import CombinationStrategy, CombinedContext, RRScoredComponent, combine
from .context import BuiltContext, ContextFragment, WhitespaceTokenizer, build_context
from .corpus import Corpus, IngestRules, Paragraph, get_sentence, ingest
from .dense_index import DenseIndex, HnswIndex, SearchHit, build
from .evidence import EvidenceConfig, EvidenceSet, best_hop, merge_and_cap, select_next
from .fusion import FusionConfig, ScoredSentence, fuse_evidence, fuse_reranker
from .hops import IterationResult, IteratorConfig, batch_run, run

__all__ = [
    "AuditConfig",
    "AuditReport",
    "BackendSuite",
    "BuiltContext",
    "CombinationStrategy",
    "CombinedContext",
    "ContextFragment",
    "Corpus",
    "DenseIndex",
    "EncoderBackend",
    "EvidenceBackend",
    "EvidenceConfig",
    "EvidenceSet",
    "FusionConfig",
    "HnswIndex",
    "IngestRules",
    "IterationResult",
    "IteratorConfig",
    "MockHashEncoder",
    "Paragraph",
    "PlantedChainEncoder",
    "RRBackend",
    "RRScoredComponent",
    "RerankBackend",
    "SamplePair",
    "ScoredSentence",
    "SearchHit",
    "WhitespaceTokenizer",
    "audit_datasets",
    "batch_run",
    "best_hop",
    "build",
    "build_context",
    "combine",
    "fuse_evidence",
    "fuse_reranker",
    "get_sentence",
    "ingest",
    "merge_and_cap",
    "mock_suite",
    "remote_suite",
    "run",
    "select_next",
    "similarity",
]
