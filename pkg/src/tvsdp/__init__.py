"""Trajectory analysis for time-varying semidefinite programs."""

__version__ = "0.1.0"

from .model import TvSdpProblem, ProblemInstance, builtin, builtin_names, instantiate

__all__ = [
    "TvSdpProblem",
    "ProblemInstance",
    "builtin",
    "builtin_names",
    "instantiate",
    "__version__",
]
