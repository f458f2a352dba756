"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in ``cli.py``; here we only distinguish
error families: configuration/input problems, network-layer failures, and
pipeline-state violations.
"""

from __future__ import annotations


class SvaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SvaError):
    """Invalid configuration (bad flags, missing env vars, bad ratios)."""


class ValidationError(SvaError):
    """A domain object violates its invariants (bad CVE id, empty field)."""


class OutOfRangeError(SvaError):
    """A numeric argument falls outside its documented range."""


class EmptyDatasetError(SvaError):
    """An ingested dataset produced zero valid records."""


class EmptyInputError(SvaError):
    """Text input was empty where content is required."""


class ZeroVectorError(SvaError):
    """Cosine similarity requested against an all-zero vector."""


class DimensionMismatchError(SvaError):
    """Vector lengths disagree with each other or with a declared dimension."""


class ProviderUnavailableError(SvaError):
    """An embedding provider could not be reached or is not ready."""


class NetworkError(SvaError):
    """A transport-level failure (connection refused, DNS, 5xx after retries).

    ``retryable`` signals whether a caller may reasonably try again later.
    """

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class RateLimitedError(NetworkError):
    """The remote service returned 429 and retries were exhausted."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message, retryable=True)
        self.retry_after = retry_after


class LlmTimeoutError(NetworkError):
    """The chat-completion request timed out after all retries."""


class AuthFailedError(SvaError):
    """The remote service rejected our credentials (401/403); never retried."""


class ProviderError(SvaError):
    """Non-retryable provider failure; carries status and a body excerpt."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class ParseError(SvaError):
    """A remote payload could not be interpreted; carries an excerpt."""

    def __init__(self, message: str, payload_excerpt: str = ""):
        if payload_excerpt:
            message = f"{message}: {payload_excerpt}"
        super().__init__(message)
        self.payload_excerpt = payload_excerpt


class UnknownCweError(SvaError):
    """The CWE registry has no entry for the requested id."""


class EmptyStoreError(SvaError):
    """Retrieval requested k > 0 but no eligible entries remain."""


class StoreNotEmbeddedError(SvaError):
    """A knowledge store is missing embeddings (or was embedded by a
    different provider than the one now in use)."""


class EmptyTargetError(SvaError):
    """Prompt assembly received a target without a description."""


class TemplateInvalidError(SvaError):
    """A prompt template is missing a placeholder or a step header."""


class UnparseableReplyError(SvaError):
    """No severity label could be extracted from an LLM reply."""


class ScriptMissError(SvaError):
    """A scripted mock has no transcript entry for the prompt hash."""


class MissingClassError(SvaError):
    """Stratified splitting requires every severity class to be present."""


class TooFewRecordsError(SvaError):
    """A severity class is too small to populate every split."""


class EmptyEvaluationError(SvaError):
    """Metrics were requested over zero samples."""


class EmptyManifestError(SvaError):
    """A report was requested over a manifest with no samples."""


class IsolationViolationError(SvaError):
    """A test-split cve_id was found inside the retrieval store."""

    def __init__(self, message: str, offending_ids: list[str] | None = None):
        ids = sorted(offending_ids or [])
        if ids:
            shown = ", ".join(ids[:5])
            more = len(ids) - 5
            suffix = f" (+{more} more)" if more > 0 else ""
            message = f"{message}: {shown}{suffix}"
        super().__init__(message)
        self.offending_ids = ids
