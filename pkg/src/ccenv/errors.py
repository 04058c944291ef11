"""Exception hierarchy shared across ccenv modules."""

from __future__ import annotations


class CcenvError(Exception):
    """Base class for every error raised by ccenv."""


class VersionParseError(CcenvError, ValueError):
    def __init__(self, text: str, span: tuple[int, int], reason: str):
        self.text = text
        self.span = span
        self.reason = reason
        start, end = span
        super().__init__(f"invalid version {text!r}: {reason} at [{start}:{end}] ({text[start:end]!r})")


class ControlParseError(CcenvError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class DependsParseError(CcenvError, ValueError):
    def __init__(self, clause: str, reason: str):
        self.clause = clause
        self.reason = reason
        super().__init__(f"bad dependency clause {clause!r}: {reason}")


class FetchError(CcenvError):
    """A download failed. ``retriable`` is true for timeouts, 404s and connection errors."""

    def __init__(self, message: str, url: str | None = None, retriable: bool = True):
        self.url = url
        self.retriable = retriable
        super().__init__(message)


class CorruptArtifactError(CcenvError):
    """Cached or downloaded bytes failed a checksum, size or decompression check."""


class FormatError(CcenvError, ValueError):
    """Bytes do not match the declared compression format."""


class NodeNotFoundError(CcenvError, LookupError):
    pass


class ContractViolation(CcenvError):
    """An operation was called outside its precondition."""


class PackageNotFoundError(CcenvError, LookupError):
    pass


class ResolutionIncompleteError(CcenvError):
    def __init__(self, root: str, unresolved):
        self.root = root
        self.unresolved = list(unresolved)
        atoms = ", ".join(str(a) for a in self.unresolved)
        super().__init__(f"cannot resolve dependencies of {root}: {atoms}")


class DownloadError(CcenvError):
    """One or more pins could not be downloaded; ``failures`` maps name to the cause."""

    def __init__(self, failures: dict[str, Exception]):
        self.failures = failures
        detail = "; ".join(f"{name}: {exc}" for name, exc in sorted(failures.items()))
        super().__init__(f"download failed for {len(failures)} package(s): {detail}")


class ExtractionError(CcenvError):
    pass


class DesktopEntryError(CcenvError, ValueError):
    pass


class WorkspaceError(CcenvError):
    pass
