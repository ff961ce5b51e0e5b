"""Exception types shared across the package."""


class RevmatchError(Exception):
    """Base class for errors raised by this package."""


class ParseError(RevmatchError):
    """A corpus or config file could not be parsed."""


class IntegrityError(RevmatchError):
    """Cross-references between corpus entities do not resolve."""


class ConfigError(RevmatchError):
    """Pipeline configuration is missing or malformed."""


class ProviderError(RevmatchError):
    """A text-service request failed after exhausting retries."""


class CheckpointError(RevmatchError):
    """A model checkpoint is unreadable or inconsistent with the config."""


class TrainingDivergedError(RevmatchError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, loss_trace: list[float]):
        super().__init__(message)
        self.loss_trace = loss_trace
