"""Exception hierarchy shared by the whole package.

Every error carries a stable machine-readable ``code`` so that the CLI and the
HTTP service can report failures uniformly: the CLI prints
``{"error": <code>, "message": ...}`` and exits nonzero, the service maps the
same payload onto an HTTP status.
"""

from __future__ import annotations


class CfgnnError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(CfgnnError):
    """A configuration value is out of range or inconsistent."""

    code = "config-error"


class ShapeMismatchError(CfgnnError):
    """Operands do not conform; the message names the offending shapes."""

    code = "shape-mismatch"


class DomainError(CfgnnError):
    """An operand is outside the mathematical domain of the operation."""

    code = "domain-error"


class GraphError(CfgnnError):
    """Misuse of the autodiff tape (e.g. backward from a non-scalar)."""

    code = "graph-error"


class SingularSystemError(CfgnnError):
    """A linear system could not be factorised even after regularisation."""

    code = "singular-system"


class BracketError(CfgnnError):
    """A root bracket for the power bisection could not be established."""

    code = "bracket-not-found"


class FormatVersionError(CfgnnError):
    """An artifact on disk declares an unsupported format version."""

    code = "format-version"


class TruncatedPayloadError(CfgnnError):
    """A binary payload is shorter or longer than its manifest declares."""

    code = "truncated-payload"


class ChecksumError(CfgnnError):
    """A binary payload does not match its manifest checksum."""

    code = "checksum-mismatch"


class MissingArtifactError(CfgnnError):
    """A referenced dataset, checkpoint or result does not exist."""

    code = "missing-artifact"


class DivergenceError(CfgnnError):
    """Training produced a non-finite loss."""

    code = "training-diverged"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class JobError(CfgnnError):
    """A background job reference is unknown or in the wrong state."""

    code = "job-error"
