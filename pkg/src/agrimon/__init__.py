"""Agriculture monitoring toolkit.

Mini data cube with zonal statistics, satellite time-series preparation,
vegetation indices, seasonality metrics, weakly supervised rice mapping,
fuzzy c-means phenology metaclasses and CAP compliance checks.
"""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
