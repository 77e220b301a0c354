"""Two-level (2S-2P hydrogen) atom interferometry under weak static perturbations.

Forward models from first-order perturbation theory, fitting of interferograms
and voltage scans, and inversion of the fits back to perturbation integrals.
"""

__version__ = "0.1.0"

from .core import (
    AmplitudePair,
    BeamParameters,
    DimensionlessConstants,
    derive_constants,
    from_dimensionless,
    to_dimensionless,
)

__all__ = [
    "AmplitudePair",
    "BeamParameters",
    "DimensionlessConstants",
    "derive_constants",
    "from_dimensionless",
    "to_dimensionless",
    "__version__",
]
