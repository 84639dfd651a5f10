"""Approximate sufficient statistics for finite-alphabet exponential families.

Lattice codes for the parameter of an i.i.d. sample, exact error
evaluation on the space of types, and numerical checks of the matching
converse arguments.
"""

from .families import DomainError, Family, SingularityError
from .typespace import (
    ExchDist,
    TypeSpace,
    TypeSpaceTooLarge,
    enumerate_types,
    kl_exch,
    l1_exch,
    product_type_dist,
)
from .lattice import Lattice, LatticeError, build_lattice
from .quadrature import Prior, QuadratureError
from .codec import (
    CodeSpec,
    ErrorReport,
    LatticeCode,
    PointCodebook,
    VisibleEmbedding,
    build_code,
    error,
    evaluate,
)

__version__ = "0.1.0"

__all__ = [
    "Family", "DomainError", "SingularityError",
    "TypeSpace", "ExchDist", "TypeSpaceTooLarge", "enumerate_types", "kl_exch", "l1_exch",
    "product_type_dist",
    "Lattice", "LatticeError", "build_lattice",
    "Prior", "QuadratureError",
    "CodeSpec", "ErrorReport", "LatticeCode", "PointCodebook", "VisibleEmbedding", "build_code",
    "error", "evaluate",
]
