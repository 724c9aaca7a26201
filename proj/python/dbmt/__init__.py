"""Diffusion bridge mixture transports: exact drifts, Euler samplers, covariance operators."""

from ._dbmt import *  # noqa: F401,F403
from ._dbmt import Error, ConfigError, DomainError, NumericalError, UnsupportedError

__all__ = [name for name in dir() if not name.startswith("_")]
