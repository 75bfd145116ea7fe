from __future__ import annotations

from typing import Optional


class VinstructError(Exception):
    """Base class for data and configuration errors raised by vinstruct."""


class RecordError(VinstructError, ValueError):
    """A record could not be parsed or violates a conversation invariant.

    `index` is a 0-based record index for raw dataset inputs and a 1-based
    line number for record streams; `index_kind` says which.
    """

    def __init__(
        self,
        message: str,
        *,
        source: str,
        index: Optional[int] = None,
        field: Optional[str] = None,
        index_kind: str = "record",
    ) -> None:
        self.source = source
        self.index = index
        self.field = field
        self.index_kind = index_kind

        where = source
        if index is not None:
            where += f" {index_kind} {index}"
        if field:
            where += f" field '{field}'"
        super().__init__(f"{where}: {message}")


class ManifestError(VinstructError, ValueError):
    """Manifest schema violation; `location` is a dotted field path."""

    def __init__(self, message: str, *, location: str = "") -> None:
        self.location = location
        prefix = f"{location}: " if location else ""
        super().__init__(f"{prefix}{message}")


class UnknownBenchmarkError(VinstructError, KeyError):
    def __init__(self, benchmark: str) -> None:
        self.benchmark = benchmark
        super().__init__(benchmark)

    def __str__(self) -> str:
        return f"Unknown benchmark: {self.benchmark!r}"
