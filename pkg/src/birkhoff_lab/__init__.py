"""Closed geodesics, curve shortening, Birkhoff sections and Fried surgery on surfaces."""
__version__ = "0.1.0"

from . import errors, geom, kernels  # noqa: E402
from .errors import *  # noqa: F401,F403,E402

__all__ = ["__version__", "errors", "geom", "kernels"]
