"""Locating small magnetized anomalies in a spherical shell from field data on an outer sphere."""

from . import aperture, forward, gridsearch, imaging, sphharm
from .errors import MaglocError

__all__ = ["aperture", "forward", "gridsearch", "imaging", "sphharm", "MaglocError"]
__version__ = "0.1.0"
