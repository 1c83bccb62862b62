"""Config-driven experiments and the command-line entry point."""

from .config import ExperimentConfig, from_dict, load
from .runner import RunManifest, compare_engines, run

__all__ = ["ExperimentConfig", "RunManifest", "compare_engines", "from_dict",
           "load", "run"]
