"""Agent-based epidemic simulation in which each agent decides daily whether to stay home."""

from .core import ConfigError, Persona
from .decisions import BackendSpec, Condition, OraclePolicy
from .experiments import ExperimentConfig, preset, run_replications
from .world import WorldConfig, load_checkpoint, run_model, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "BackendSpec", "Condition", "ConfigError", "ExperimentConfig", "OraclePolicy", "Persona", "WorldConfig",
    "load_checkpoint", "preset", "run_model", "run_replications", "save_checkpoint",
]
