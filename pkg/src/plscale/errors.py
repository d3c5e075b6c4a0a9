"""Exception types shared across the toolkit."""

from __future__ import annotations


class ValidationError(ValueError):
    """Input failed a precondition (bad values, malformed records, too little data)."""


class InsufficientDataError(ValidationError):
    """Not enough distinct points to identify the requested fit."""


class FieldError(ValidationError):
    """A single named field holds an invalid value."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownPresetError(ValidationError, KeyError):
    """No built-in law with the requested name."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return ValueError.__str__(self)


class IngestError(ValidationError):
    """One or more run records were rejected during ingestion.

    ``diagnostics`` holds one :class:`RowDiagnostic` per rejected row.
    """

    def __init__(self, diagnostics: list[RowDiagnostic]):
        self.diagnostics = list(diagnostics)
        lines = [str(d) for d in self.diagnostics[:20]]
        if len(self.diagnostics) > 20:
            lines.append(f"... and {len(self.diagnostics) - 20} more")
        super().__init__("; ".join(lines))


class RowDiagnostic:
    __slots__ = ("line", "field", "message")

    def __init__(self, line: int | None, field: str | None, message: str):
        self.line = line
        self.field = field
        self.message = message

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "record"
        if self.field:
            where += f", field '{self.field}'"
        return f"{where}: {self.message}"

    def __repr__(self) -> str:
        return f"RowDiagnostic(line={self.line!r}, field={self.field!r}, message={self.message!r})"


class FitError(RuntimeError):
    """A solver or fit failed to produce a usable result."""

