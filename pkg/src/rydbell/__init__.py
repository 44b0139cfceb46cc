"""Monte-Carlo simulation of Rydberg-blockade entanglement between two trapped atoms."""

from .config import ConfigError, ExperimentConfig, default_config, load_config

__version__ = "0.1.0"

__all__ = ["ConfigError", "ExperimentConfig", "default_config", "load_config", "__version__"]
