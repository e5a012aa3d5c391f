"""Exception hierarchy shared across the package."""


class HopfuseError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(HopfuseError):
    """A record could not be ingested, or the corpus is unusable after filtering."""


class RecordError(IngestError):
    """A single malformed input record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class FormatError(HopfuseError):
    """A persisted file is corrupt, truncated, or has a version mismatch."""


class CorpusLookupError(HopfuseError, KeyError):
    """Unknown document identifier or out-of-range sentence index."""


class IndexError_(HopfuseError):
    """Index construction or query violates the index contract."""


class BackendError(HopfuseError):
    """A scoring backend returned an unusable response."""


class RemoteTransportError(BackendError):
    """Remote backend could not be reached after bounded retries."""


class RemoteProtocolError(BackendError):
    """Remote backend answered with a malformed or out-of-contract payload."""


class PipelineError(HopfuseError):
    """Hop-loop execution aborted; carries the partial trace gathered so far."""

    def __init__(self, message: str, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace if partial_trace is not None else []


class ContextError(HopfuseError):
    """Context construction cannot satisfy its contract (e.g. budget too small)."""


class AuditError(HopfuseError):
    """Overlap audit input violates a precondition (e.g. zero-norm embedding)."""


class ConfigError(HopfuseError):
    """Invalid configuration file or flag combination."""
