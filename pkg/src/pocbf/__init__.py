"""Compositional safety certificates for partially observed stochastic networks."""
from .gains import GainFn
from .polyalg import Polynomial, Var, VarKind, gaussian_expectation, affine_substitute
from .regions import BoxRegion, RegionSpec, inflate_unsafe

__version__ = "0.1.0"

__all__ = [
    "GainFn",
    "Polynomial",
    "Var",
    "VarKind",
    "gaussian_expectation",
    "affine_substitute",
    "BoxRegion",
    "RegionSpec",
    "inflate_unsafe",
    "__version__",
]
