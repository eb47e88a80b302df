"""Exception hierarchy shared across the package."""


class OodkitError(Exception):
    """Base class for all library errors."""


class InputError(OodkitError):
    """Invalid argument values, shapes, or domains."""


class FormatError(OodkitError):
    """Malformed, truncated, or mislabeled on-disk artifacts."""


class ConfigError(InputError):
    """Configuration schema violation; the message names the offending key."""


class EstimationError(OodkitError):
    """Statistical estimation is impossible, e.g. a class with no samples."""


class NumericalError(OodkitError):
    """Numerical failure, e.g. a covariance that stays indefinite."""


class TrainingError(OodkitError):
    """Training aborted. Carries the last finite state when available."""

    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history
