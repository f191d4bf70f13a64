"""Error taxonomy shared by the library, the CLI and the HTTP service.

Every failure mode a caller can trigger maps to one exception class with a
stable ``category`` string and process exit code, so the CLI can translate
any library error into a machine-readable result without pattern matching
on messages.
"""

from __future__ import annotations


class PolymerlabError(Exception):
    """Base class for all intentional failures."""

    category = "error"
    exit_code = 1


class ConfigError(PolymerlabError):
    """Unknown command, missing or malformed parameter."""

    category = "config"
    exit_code = 2


class DomainError(PolymerlabError):
    """Input outside the mathematical domain of a formula."""

    category = "domain"
    exit_code = 3


class CapacityError(PolymerlabError):
    """Input exceeds a documented size budget (exact DP, oracle search, 2^63)."""

    category = "capacity"
    exit_code = 4


class InvalidEndpointError(PolymerlabError):
    """Bridge endpoints unreachable (parity or range violation)."""

    category = "invalid-endpoint"
    exit_code = 5


class IncompleteInputError(PolymerlabError):
    """A required table entry (e.g. a joint probability) is missing."""

    category = "incomplete-input"
    exit_code = 6


class VersionMismatchError(PolymerlabError):
    """Replay attempted against a record written by a different version."""

    category = "version-mismatch"
    exit_code = 7
