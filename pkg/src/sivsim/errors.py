"""Exception hierarchy shared by all sivsim modules."""


class SivError(Exception):
    """Base class for every error raised by sivsim."""


class ParameterDomainError(SivError, ValueError):
    pass


class ClassificationError(SivError):
    """Eigenstates cannot be labelled or paired unambiguously."""


class DegeneracyError(SivError):
    pass


class NumericalInstabilityError(SivError):
    """A propagated state violates a density-matrix invariant."""


class StepSizeError(SivError):
    pass


class NonUniqueSteadyStateError(SivError):
    pass


class ProtocolError(SivError):
    pass


class DegenerateSignalError(SivError):
    pass


class SeedingError(SivError):
    """Initial guesses for a nonlinear fit could not be derived from the data."""


class RankError(SivError, ValueError):
    pass


class ConfigError(SivError, ValueError):
    """Configuration text is malformed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
