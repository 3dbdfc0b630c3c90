"""Free boundary minimal surfaces in the unit ball by desingularizing catenoidal configurations."""
from ._accel import backend
from .errors import (BracketFailure, ConvergenceWarning, DegenerateTriangle, FBMSError,
                     NumericalFailure, ValidationError)

__version__ = "0.1.0"

__all__ = ["backend", "BracketFailure", "ConvergenceWarning", "DegenerateTriangle", "FBMSError",
           "NumericalFailure", "ValidationError", "__version__"]
