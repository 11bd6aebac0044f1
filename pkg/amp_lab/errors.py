"""
Exception types raised by amp_lab. All derive from `LabError`, and most
also derive from the builtin that a caller would otherwise catch.
"""


class LabError(Exception):
    """Base class for all amp_lab errors."""


class ZeroProbabilityEvent(LabError, ValueError):
    """Conditioning on an event of probability zero."""


class SupportViolation(LabError, ValueError):
    """A cut function maps an outcome onto a different outcome of the universe."""


class InternalNamespaceError(LabError, ValueError):
    """A user value collides with the reserved sentinel namespace."""


class DensityViolation(LabError, ValueError):
    """An event family is not column-local, not dense, or not prefix."""

    def __init__(self, row, column, fixing, reason=""):
        self.row = row
        self.column = column
        self.fixing = fixing
        msg = f"Event family violates density at row {row}, column {column}"
        msg += f" (fixing {fixing!r})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class UnreachableConditioning(LabError, ValueError):
    """A reachable history requires conditioning on a zero-probability event."""


class PrefixOutsideSupport(LabError, ValueError):
    """A prefix that the ideal distribution never produces."""


class EmptyGoodSet(LabError, ValueError):
    """The good index set of a round is empty."""


class CapExceeded(LabError, RuntimeError):
    """A resampling loop hit its iteration cap."""

    def __init__(self, round, iterations):
        self.round = round
        self.iterations = iterations
        super().__init__(f"Resampling cap of {iterations} hit in round {round}")


class MalformedMessage(LabError, ValueError):
    """A prover message that the verifier cannot parse."""


class ConfigError(LabError, ValueError):
    """Missing or invalid experiment configuration."""


class CoordinateError(LabError, IndexError):
    """A coordinate outside the declared bounds of a structured outcome."""
