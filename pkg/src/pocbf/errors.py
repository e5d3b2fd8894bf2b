"""Exception hierarchy shared across the package."""


class PocbfError(Exception):
    """Base class for all errors raised by pocbf."""


class MissingAssignmentError(PocbfError, KeyError):
    """A polynomial variable has no value at the evaluation point."""

    def __str__(self):  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class SubstitutionArityError(PocbfError, ValueError):
    """A substitution map does not cover every variable, or is not affine."""


class InvalidParameterError(PocbfError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DimensionMismatchError(PocbfError, ValueError):
    """Vector, matrix or region dimensions disagree."""


class GridTooLargeError(PocbfError, MemoryError):
    """A verification grid would exceed the configured point budget."""


class WiringError(PocbfError, ValueError):
    """An interconnection edge is inconsistent with the blocks it joins."""


class DivergedTrajectoryError(PocbfError, ArithmeticError):
    """A simulated state became non-finite."""


class InvalidCertificateError(PocbfError, ValueError):
    """Certificate data violates a structural invariant."""


class SmallGainError(PocbfError, ValueError):
    """Composition was requested for gains that fail the small-gain test."""


class CompositionInfeasibleError(PocbfError, ValueError):
    """The composed certificate has gamma >= lambda."""


class ConfigError(PocbfError, ValueError):
    """A project configuration file is malformed."""
