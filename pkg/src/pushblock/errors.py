"""Exception hierarchy shared by all modules."""


class PushBlockError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(PushBlockError, ValueError):
    """Invalid user input (rates, points, configuration)."""


class NumericalError(PushBlockError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class NonPositiveRate(ConfigError):
    pass


class PoleHit(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class ResidueUnavailable(NumericalError):
    """The residue fast path cannot be used; callers fall back to quadrature."""


class RepeatedRates(ResidueUnavailable):
    pass


class IllConditionedResidues(ResidueUnavailable):
    pass


class ContractionViolated(NumericalError):
    pass


class NotAChamberPoint(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


class TruncationTooTight(NumericalError):
    pass


class SupportTooLarge(NumericalError):
    pass


class NegativeDensity(NumericalError):
    pass
