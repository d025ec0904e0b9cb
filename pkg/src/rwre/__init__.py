"""Recurrent random walk in a random environment on the nonnegative integers:
environments and their potential, valley decomposition, exact chain
analytics, Monte Carlo of the quenched walk, and verification studies."""

__version__ = "0.1.0"

from .environment import (Environment, EnvironmentSpec, TwoPoint, UniformSymmetric,  # noqa: E402
                          make_environment)
from .errors import *  # noqa: E402,F401,F403

__all__ = ["Environment", "EnvironmentSpec", "TwoPoint", "UniformSymmetric", "make_environment",
           "__version__"]
