"""Exception hierarchy shared by all stages of the toolchain."""

from __future__ import annotations


class QhdlcError(Exception):
    """Base class for all errors raised by this package."""


class SourceError(QhdlcError):
    """An error anchored to a position in a QHDL source file."""

    def __init__(self, message: str, filename: str = "<input>",
                 line: int = 0, col: int = 0):
        super().__init__(message)
        self.message = message
        self.filename = filename
        self.line = line
        self.col = col

    def format(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}: {self.message}"

    def __str__(self) -> str:
        return self.format()


class LexError(SourceError):
    """Character outside the token alphabet, or a malformed token."""


class ParseError(SourceError):
    """Syntax error or parse-time declaration violation."""


class ValidationError(SourceError):
    """Netlist-level rule violation (connectivity, polarity, typing)."""


class CircuitError(QhdlcError):
    """Ill-formed circuit expression (channel counts, indices)."""


class SpaceError(QhdlcError):
    """Incompatible Hilbert-space descriptors (label/dimension clash)."""


class ModelError(QhdlcError):
    """SLH triplet violating unitarity/Hermiticity beyond tolerance."""


class SingularFeedbackError(ModelError):
    """Feedback loop with a singular 1 - S_kl; the reduction is not well posed."""


class EvaluationError(QhdlcError):
    """Missing or mismatched component bindings during evaluation."""


class SimulationError(QhdlcError):
    """Numerical failure during time integration (trace drift, underflow)."""


class UserError(QhdlcError):
    """Bad command-line input: missing parameters, unknown names, bad files."""
