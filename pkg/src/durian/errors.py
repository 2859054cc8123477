"""Exception hierarchy shared by all durian modules."""


class DurianError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DurianError, ValueError):
    pass


class DegenerateInputError(DurianError, ValueError):
    pass


class DegenerateSpectrumError(DegenerateInputError):
    pass


class DegenerateResponseError(DegenerateInputError):
    pass


class DegenerateGroupError(DegenerateInputError):
    pass


class EmptyInputError(DegenerateInputError):
    pass


class ConvergenceError(DurianError, ArithmeticError):
    pass


class ConfigError(DurianError, ValueError):
    """Invalid configuration. ``key`` names the offending setting."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
