"""Two-level multi-agent deep Q-learning for network intrusion detection."""
from .config import RunConfig, load_config
from .ensemble import MarlEnsemble, adapt, build_ensemble, predict, predict_batch, train_all
from .errors import (ConfigError, ContainerError, EmptyBufferError, IncompatibilityError,
                     IngestionError, MarlIdsError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "MarlEnsemble", "adapt", "build_ensemble", "predict",
    "predict_batch", "train_all", "ConfigError", "ContainerError", "EmptyBufferError",
    "IncompatibilityError", "IngestionError", "MarlIdsError", "ValidationError",
]
