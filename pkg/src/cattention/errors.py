"""Exception types shared across the toolkit."""


class CAttentionError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(CAttentionError):
    """Tensor shapes violate an operation's contract."""


class SequenceTooShortError(ShapeError):
    """Input sequence is shorter than a convolution kernel."""


class ConfigError(CAttentionError):
    """Invalid configuration value or combination."""


class IngestionError(CAttentionError):
    """Corpus or record content violates the input schema."""
