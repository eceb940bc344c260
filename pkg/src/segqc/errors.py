"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, unreadable or
unwritable files exit 3, and mutually inconsistent inputs exit 4.
"""


class SegqcError(Exception):
    """Base class for every error raised by this package."""


class InputFileError(SegqcError):
    """A file could not be read, parsed, or written."""


class DataConsistencyError(SegqcError):
    """Inputs are individually well-formed but mutually inconsistent."""
