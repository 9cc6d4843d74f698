"""Bayesian inference for structural models by matching histograms of population moments."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .errors import DMPIError
