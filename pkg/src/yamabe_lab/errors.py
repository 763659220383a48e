"""Exception types raised across the package."""


class YamabeLabError(Exception):
    """Base class for all package errors."""


class InvalidField(YamabeLabError, ValueError):
    pass


class StepRejected(YamabeLabError):
    """A trial step grew sup|R| by more than the allowed factor."""


class BlowUpReached(YamabeLabError):
    pass


class StepFailure(YamabeLabError):
    pass


class InsufficientHistory(YamabeLabError):
    pass


class NonpositiveCurvatureAtBasePoint(YamabeLabError):
    pass


class HypothesisViolated(YamabeLabError):
    """A curvature sign/pinching precondition does not hold on the snapshot."""


class UnsupportedChart(YamabeLabError):
    pass


class AllNodesUndefined(YamabeLabError):
    pass


class PastBlowUp(YamabeLabError):
    pass


class ConfigError(YamabeLabError, ValueError):
    pass
