"""Diagnostic records shared by the parser and the validator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .ast import Span


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    col: int
    severity: str  # "error" | "warning"
    message: str
    rule: str
    span: Optional[Span] = None

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.severity}: {self.message} [{self.rule}]"


class FrontendError(Exception):
    """Raised by parse() when the input is not in the subset."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics) or "parse error")


class TransformError(Exception):
    """A transformation's precondition failed (unsafe or unsupported input)."""


class UnsafeKernelError(TransformError):
    """Splitting refused: the safety verdict blocks decoupling."""

    def __init__(self, message, blocking_edges=()):
        super().__init__(message)
        self.blocking_edges = list(blocking_edges)


class OverrideError(ValueError):
    """An MLCD override named an edge it is not allowed to touch."""
