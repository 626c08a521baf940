"""Exception types raised across the package.

All of them derive from ``ValueError`` or ``RuntimeError`` so callers that
don't care about the distinction can catch the builtin.
"""


class InvalidArgument(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class InvalidTemplate(ValueError):
    pass


class InsufficientNoise(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class UndefinedMetric(ValueError):
    pass


class InvalidConfig(ValueError):
    pass


class GenerationFailed(RuntimeError):
    def __init__(self, message, retries):
        super().__init__(message)
        self.retries = retries
