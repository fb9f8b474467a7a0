"""Exception hierarchy shared by every cdqkl module."""

from __future__ import annotations

from typing import Any


class CdqklError(Exception):
    """Root of all errors raised by the simulator.

    ``details`` holds extra machine-readable fields that the CLI merges into its
    error JSON.
    """

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, **self.details}


class CapacityError(CdqklError, ValueError):
    """Register size outside the supported range."""


class DimensionError(CdqklError, ValueError):
    """Shapes of two operands do not match."""


class GateError(CdqklError, ValueError):
    """Invalid gate kind, qubit index or angle."""


class DegenerateInputError(CdqklError, ValueError):
    """Input with zero norm or no usable content."""


class GraphError(CdqklError, ValueError):
    """Invalid or disconnected network topology."""

    def __init__(self, message: str, components: list[list[int]] | None = None) -> None:
        super().__init__(message, components=components or [])
        self.components = components or []


class WavParseError(CdqklError, ValueError):
    """Malformed or unsupported RIFF/WAVE content."""

    def __init__(self, message: str, chunk: str) -> None:
        super().__init__(message, chunk=chunk)
        self.chunk = chunk


class DataError(CdqklError, ValueError):
    """Malformed dataset file or invalid dataset content."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is None:
            super().__init__(message)
        else:
            super().__init__(f"line {line}: {message}", line=line)
        self.line = line


class ConfigError(CdqklError, ValueError):
    """Experiment configuration failed validation."""


class DivergenceError(CdqklError, ArithmeticError):
    """Training produced a non-finite gradient."""
