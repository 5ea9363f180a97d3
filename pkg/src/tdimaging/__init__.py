"""Topological-derivative imaging of small electromagnetic inclusions.

Leading-order boundary data synthesis, back-propagation, closed-form
sensitivity predictions and Monte Carlo stability checks.
"""

from .errors import InvalidArgument, SingularityError, DegenerateMapError
from .greens import WaveContext

__version__ = "0.1.0"

__all__ = ["InvalidArgument", "SingularityError", "DegenerateMapError",
           "WaveContext", "__version__"]
