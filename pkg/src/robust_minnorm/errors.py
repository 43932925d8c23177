"""Exception hierarchy shared by all modules."""


class RobustMinNormError(Exception):
    """Base class for library errors."""


class InvalidArgument(RobustMinNormError, ValueError):
    pass


class BallViolation(RobustMinNormError, ValueError):
    """A construction would leave the Wasserstein ball."""


class DegenerateSupport(RobustMinNormError, ValueError):
    pass


class DegenerateProbe(RobustMinNormError, ValueError):
    pass


class InconsistentMetadata(RobustMinNormError, ValueError):
    pass


class NotApplicable(RobustMinNormError, ValueError):
    pass


class IllPosed(RobustMinNormError):
    """The robust value is -inf: the utility decays faster than |x|^p."""


class NumericalFailure(RobustMinNormError, ArithmeticError):
    pass


class DualityGapError(NumericalFailure):
    """Primal and dual inner values disagree beyond tolerance."""


class ConfigError(RobustMinNormError, ValueError):
    pass
