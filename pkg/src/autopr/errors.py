"""Exception hierarchy with stable CLI exit codes.

Every failure mode the pipeline or harness can report maps to one exception
class carrying a machine-readable ``code`` and a process ``exit_code``. The
CLI serializes these as JSON lines on stderr; scripts should match on
``code``, not on message text.
"""

from __future__ import annotations


class AutoPRError(Exception):
    """Base class for all package errors."""

    code = "error"
    exit_code = 1

    def record(self) -> dict:
        """Machine-readable error record (one JSON line on stderr)."""
        return {"error": self.code, "message": str(self)}


# --- document ingestion ---

class MalformedPdfError(AutoPRError):
    code = "malformed-pdf"
    exit_code = 10


class EncryptedPdfError(AutoPRError):
    code = "encrypted-pdf"
    exit_code = 11


class EmptyDocumentError(AutoPRError):
    code = "empty-document"
    exit_code = 12


class ChunkTooLargeError(AutoPRError):
    """A single sentence exceeds the per-call token budget."""

    code = "chunk-too-large"
    exit_code = 13


# --- model gateway ---

class ConfigMissingRoleError(AutoPRError):
    code = "config-missing-role"
    exit_code = 20


class ProviderError(AutoPRError):
    """Non-retryable endpoint failure (4xx equivalents)."""

    code = "provider-error"
    exit_code = 21


class ExhaustedRetriesError(AutoPRError):
    code = "exhausted-retries"
    exit_code = 22


class ResponseEmptyError(AutoPRError):
    code = "response-empty"
    exit_code = 23


class NotMultimodalEndpointError(AutoPRError):
    code = "not-multimodal-endpoint"
    exit_code = 24


# --- layout service client ---

class ServiceUnreachableError(AutoPRError):
    code = "service-unreachable"
    exit_code = 25


class ServiceSchemaViolationError(AutoPRError):
    code = "service-schema-violation"
    exit_code = 26


# --- synthesis / adaptation ---

class UnknownPlatformError(AutoPRError):
    code = "unknown-platform"
    exit_code = 30


class StructureValidationError(AutoPRError):
    """Drafting model failed to produce the required sections after a retry."""

    code = "structure-validation-failed"
    exit_code = 31


class EmptyAnalysisError(AutoPRError):
    code = "empty-analysis"
    exit_code = 32


class SentinelCorruptionError(AutoPRError):
    """Adaptation model altered a shielded placeholder token twice."""

    code = "sentinel-corruption"
    exit_code = 33


class UnresolvedPlaceholderError(AutoPRError):
    code = "unresolved-placeholder"
    exit_code = 34


class PromptError(AutoPRError):
    """Missing template or unfilled slot in the prompt library."""

    code = "prompt-error"
    exit_code = 35


# --- judging ---

class ImagesRequiredError(AutoPRError):
    code = "images-required"
    exit_code = 40


class RatingUnparseableError(AutoPRError):
    code = "rating-unparseable"
    exit_code = 41


class VerdictUnparseableError(AutoPRError):
    code = "verdict-unparseable"
    exit_code = 42


class PickUnparseableError(AutoPRError):
    code = "pick-unparseable"
    exit_code = 43


class EmptyChecklistError(AutoPRError):
    code = "empty-checklist"
    exit_code = 44


# --- benchmark dataset / reports ---

class SchemaViolationError(AutoPRError):
    code = "schema-violation"
    exit_code = 50


class MissingFileError(AutoPRError):
    code = "missing-file"
    exit_code = 51


class DuplicateIdError(AutoPRError):
    code = "duplicate-id"
    exit_code = 52


class MissingCandidateError(AutoPRError):
    code = "missing-candidate"
    exit_code = 53


class ConsensusInputError(AutoPRError):
    """Wrong arity or out-of-range value in a human score triple."""

    code = "consensus-input"
    exit_code = 54


class CorrelationError(AutoPRError):
    """Undefined coefficient (constant input or too few points)."""

    code = "undefined-correlation"
    exit_code = 55


class LengthMismatchError(AutoPRError):
    code = "length-mismatch"
    exit_code = 57


class EmptyInputError(AutoPRError):
    code = "empty-input"
    exit_code = 56


# --- generic IO / CLI ---

class IoFailureError(AutoPRError):
    code = "io-failure"
    exit_code = 60


class UnreadableInputError(AutoPRError):
    code = "unreadable-input"
    exit_code = 61


class ConfigError(AutoPRError):
    code = "config-error"
    exit_code = 62
