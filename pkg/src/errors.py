"""
Typed errors raised across the toolkit.

Every error carries the process exit code the CLI maps it to:
0 ok, 1 validation, 2 I/O, 3 internal.
"""

from typing import Optional


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_INTERNAL


class ValidationError(ToolkitError):
    """Input or parameter violates a documented constraint."""

    exit_code = EXIT_VALIDATION


class NotFoundError(ValidationError):
    """Lookup of a class name, class id or frame id failed."""


class FormatError(ValidationError):
    """
    Malformed file content.

    Args:
        message: What is wrong with the record
        path: File the record came from, if known
        record: Zero-based record (line, point or annotation) index, if known
    """

    def __init__(self, message: str, path: Optional[str] = None, record: Optional[int] = None):
        self.path = path
        self.record = record
        location = []
        if path is not None:
            location.append(str(path))
        if record is not None:
            location.append(f"record {record}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class DanglingReferenceError(FormatError):
    """An annotation references an image, category or object that does not exist."""


class CountMismatchError(FormatError):
    """A header declares a different number of records than the body holds."""


class TruncatedPayloadError(FormatError):
    """A binary payload ends before the declared data."""


class UnsupportedLayoutError(FormatError):
    """A file uses a field layout or encoding the toolkit does not read."""


class StorageError(ToolkitError):
    """Reading or writing a file failed at the operating-system level."""

    exit_code = EXIT_IO
