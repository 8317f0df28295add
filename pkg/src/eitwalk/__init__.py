"""Walk-on-spheres estimators for electrode currents in the complete electrode model."""
from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
