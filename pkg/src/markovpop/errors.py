"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the CLI can map
them to a single exit code; configuration and input problems derive from
:class:`InputError`.
"""


class MarkovPopError(Exception):
    pass


class NumericalError(MarkovPopError):
    pass


class InputError(MarkovPopError):
    pass


class NonFiniteRate(NumericalError):
    pass


class NonIntegerCounts(InputError):
    pass


class StepDiverged(NumericalError):
    pass


class SingularFundamental(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class ChainDiverged(NumericalError):
    pass


class AllSamplesDegenerate(NumericalError):
    pass


class DimensionMismatch(InputError, ValueError):
    pass


class NonPositiveDiagonal(InputError, ValueError):
    pass


class MalformedRow(InputError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTime(InputError, ValueError):
    pass


class ConfigError(InputError, ValueError):
    pass


class NoProgress(RuntimeWarning):
    """Optimizer stopped at its iteration cap without meeting tolerance."""
