"""Exception hierarchy shared by every stage of the pipeline."""


class MarlIdsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MarlIdsError, ValueError):
    """Bad argument values, shapes or labels."""


class ConfigError(ValidationError):
    """Invalid hyperparameter or reward configuration."""


class EmptyBufferError(MarlIdsError):
    """Sampling was requested from an empty replay buffer."""


class IngestionError(MarlIdsError):
    """A flow file could not be parsed."""


class ContainerError(MarlIdsError):
    """A model or dataset container is unreadable, corrupt or of the wrong version."""


class IncompatibilityError(MarlIdsError):
    """A model and a dataset disagree on feature dimension or label registry."""
